use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use simpletrack::geometry::{giou_3d, BBox3D};
use simpletrack::{Detection, Frame, Profile, Tracker};
use simpletrack_ffi::*;

fn st_box(x: f64, y: f64) -> StBox {
    StBox {
        center_x: x,
        center_y: y,
        center_z: 0.0,
        length: 4.0,
        width: 2.0,
        height: 1.5,
        yaw: 0.0,
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(st_last_error_message()) }.to_string_lossy().into_owned()
}

struct Handle(*mut StTracker);

impl Handle {
    fn profile(name: &str) -> Self {
        let name = CString::new(name).unwrap();
        let mut h = ptr::null_mut();
        assert_eq!(unsafe { st_tracker_new_profile(name.as_ptr(), &mut h) }, StStatus::Ok);
        Handle(h)
    }

    fn push(&self, frame: u64, dets: &[StDetection]) -> Result<Vec<StTrack>, StStatus> {
        let mut n = 0;
        let status = unsafe { st_tracker_push_frame(self.0, frame, true, dets.as_ptr(), dets.len(), &mut n) };
        if status != StStatus::Ok {
            return Err(status);
        }
        let mut buf = vec![
            StTrack {
                frame_index: 0,
                track_id: 0,
                bbox: st_box(0.0, 0.0),
                score: 0.0,
                class_name: ptr::null(),
                is_prediction: false,
            };
            n
        ];
        let mut written = 0;
        let status = unsafe { st_tracker_outputs(self.0, buf.as_mut_ptr(), buf.len(), &mut written) };
        assert_eq!(status, StStatus::Ok);
        assert_eq!(written, n);
        Ok(buf)
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { st_tracker_free(self.0) }
    }
}

#[test]
fn matches_the_native_tracker() {
    let vehicle = CString::new("vehicle").unwrap();
    let h = Handle::profile("wod");
    let mut native = Tracker::new(Profile::Wod.config()).unwrap();
    for f in 0..12u64 {
        let xs = [f as f64, 20.0 - 0.5 * f as f64];
        let c_dets: Vec<StDetection> = xs
            .iter()
            .map(|&x| StDetection {
                bbox: st_box(x, 0.0),
                score: 0.9,
                class_name: vehicle.as_ptr(),
                has_velocity: false,
                velocity_x: 0.0,
                velocity_y: 0.0,
            })
            .collect();
        let dets: Vec<Detection> = xs
            .iter()
            .map(|&x| Detection::new(BBox3D::new(x, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0).unwrap(), 0.9, "vehicle"))
            .collect();
        let want = native.process_frame(&Frame::new("ffi", f, dets)).unwrap();
        let got = h.push(f, &c_dets).unwrap();
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((g.frame_index, g.track_id), (w.frame_index, w.track_id));
            assert_eq!(g.score, w.score);
            assert_eq!(g.bbox.center_x, w.bbox.center_x);
            assert_eq!(unsafe { CStr::from_ptr(g.class_name) }.to_str().unwrap(), "vehicle");
        }
    }
    assert_eq!(unsafe { st_tracker_live_count(h.0) }, 2);
}

#[test]
fn reports_errors_with_codes() {
    let mut h = ptr::null_mut();
    let bad = CString::new("kitti").unwrap();
    assert_eq!(unsafe { st_tracker_new_profile(bad.as_ptr(), &mut h) }, StStatus::ConfigError);
    assert!(h.is_null());
    assert!(last_error().contains("kitti"));
    assert_eq!(unsafe { st_tracker_new_profile(ptr::null(), &mut h) }, StStatus::NullPointer);

    let text = CString::new("lifecycle.min_hits = 0\n").unwrap();
    assert_eq!(unsafe { st_tracker_new_config(text.as_ptr(), &mut h) }, StStatus::ConfigError);
    let text = CString::new("profile = \"nuscenes\"\nstrategy = \"greedy\"\n").unwrap();
    assert_eq!(unsafe { st_tracker_new_config(text.as_ptr(), &mut h) }, StStatus::Ok);
    let handle = Handle(h);

    let vehicle = CString::new("vehicle").unwrap();
    let det = |score: f64, length: f64| StDetection {
        bbox: StBox {
            length,
            ..st_box(0.0, 0.0)
        },
        score,
        class_name: vehicle.as_ptr(),
        has_velocity: true,
        velocity_x: 1.0,
        velocity_y: 0.0,
    };
    assert_eq!(handle.push(3, &[det(0.9, 4.0)]).unwrap().len(), 1);
    assert_eq!(handle.push(3, &[]).err(), Some(StStatus::OutOfOrderFrame));
    assert_eq!(handle.push(4, &[det(1.5, 4.0)]).err(), Some(StStatus::MalformedDetection));
    assert_eq!(handle.push(5, &[det(0.9, -1.0)]).err(), Some(StStatus::MalformedDetection));
    assert!(!last_error().is_empty());

    let out = handle.push(6, &[det(0.9, 4.0)]).unwrap();
    let mut written = 0;
    let mut one = out.clone();
    assert_eq!(unsafe { st_tracker_outputs(handle.0, one.as_mut_ptr(), 0, &mut written) }, StStatus::BufferTooSmall);
    assert_eq!(written, out.len());

    let mut n = 0;
    assert_eq!(unsafe { st_tracker_push_frame(ptr::null_mut(), 0, true, ptr::null(), 0, &mut n) }, StStatus::NullPointer);
    unsafe { st_tracker_free(ptr::null_mut()) };
}

#[test]
fn overlap_functions() {
    let a = st_box(0.0, 0.0);
    let b = st_box(1.0, 0.5);
    let mut v = 0.0;
    assert_eq!(unsafe { st_giou_3d(&a, &b, &mut v) }, StStatus::Ok);
    let native = giou_3d(
        &BBox3D::new(0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0).unwrap(),
        &BBox3D::new(1.0, 0.5, 0.0, 4.0, 2.0, 1.5, 0.0).unwrap(),
    );
    assert_eq!(v, native);
    assert_eq!(unsafe { st_iou_3d(&a, &a, &mut v) }, StStatus::Ok);
    assert_eq!(v, 1.0);
    let broken = StBox { width: 0.0, ..a };
    assert_eq!(unsafe { st_iou_3d(&a, &broken, &mut v) }, StStatus::InvalidArgument);
    assert_eq!(unsafe { st_iou_3d(ptr::null(), &a, &mut v) }, StStatus::NullPointer);
    let version = unsafe { CStr::from_ptr(st_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/simpletrack.h")
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok()
}

#[test]
fn header_compiles_as_c_and_cpp() {
    if !have_cc() {
        eprintln!("no C compiler found; skipping header check");
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("inc.c");
    std::fs::write(&src, "#include \"simpletrack.h\"\nint main(void) { return ST_STATUS_OK; }\n").unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let c = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(c.success());
    let cpp = Command::new("c++")
        .args(["-x", "c++", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status();
    if let Ok(status) = cpp {
        assert!(status.success());
    }
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("simpletrack-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include "simpletrack.h"

int main(void) {
    StTracker *t = NULL;
    if (st_tracker_new_profile("wod", &t) != ST_STATUS_OK) return 1;
    StTrack out[8];
    size_t emitted = 0;
    for (uint64_t f = 0; f < 6; ++f) {
        StDetection d = {{(double)f, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0}, 0.9, "vehicle", false, 0.0, 0.0};
        size_t n = 0, written = 0;
        if (st_tracker_push_frame(t, f, true, &d, 1, &n) != ST_STATUS_OK) return 2;
        if (st_tracker_outputs(t, out, 8, &written) != ST_STATUS_OK) return 3;
        emitted += written;
        if (written == 1 && out[0].track_id != 0) return 4;
    }
    if (st_tracker_push_frame(t, 2, true, NULL, 0, &emitted) != ST_STATUS_OUT_OF_ORDER_FRAME) return 5;
    printf("%zu %s\n", emitted, st_last_error_message()[0] ? "err" : "none");
    st_tracker_free(t);
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = lib_dir.join("libsimpletrack_ffi.a");
    if !have_cc() || !lib.exists() {
        eprintln!("static library or C compiler unavailable; skipping link check");
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("smoke.c");
    let bin = dir.join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    // min_hits 3: frames 2..=5 are reported
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4 err");
}
