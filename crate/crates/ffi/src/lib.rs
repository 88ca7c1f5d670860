//! C ABI for the simpletrack tracker.
//!
//! A `StTracker` handle runs one sequence online. Push detections frame by
//! frame with `st_tracker_push_frame`, then copy the frame's outputs with
//! `st_tracker_outputs`. Every call returns an `StStatus`; on failure
//! `st_last_error_message` describes the error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use simpletrack::geometry::{giou_3d, iou_3d, BBox3D};
use simpletrack::io::config::{parse_config, Profile};
use simpletrack::lifecycle::StateSource;
use simpletrack::{Detection, Error, Frame, TrackRecord, Tracker, TrackerConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    OutOfOrderFrame = 4,
    MalformedDetection = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Oriented box: center, dimensions, and heading in radians.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StBox {
    pub center_x: f64,
    pub center_y: f64,
    pub center_z: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

/// One input detection. `class_name` is a NUL-terminated UTF-8 string.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StDetection {
    pub bbox: StBox,
    pub score: f64,
    pub class_name: *const c_char,
    /// True when `velocity_x` and `velocity_y` are set, in meters per frame.
    pub has_velocity: bool,
    pub velocity_x: f64,
    pub velocity_y: f64,
}

/// One reported tracklet state.
///
/// `class_name` stays valid until the next push on the same tracker or until
/// the tracker is freed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StTrack {
    pub frame_index: u64,
    pub track_id: u64,
    pub bbox: StBox,
    pub score: f64,
    pub class_name: *const c_char,
    /// True when the state is a motion prediction rather than a detection.
    pub is_prediction: bool,
}

/// Opaque tracker handle.
pub struct StTracker {
    tracker: Tracker,
    outputs: Vec<TrackRecord>,
    class_names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: StStatus, message: &str) -> StStatus {
    set_error(message);
    status
}

fn status_of(e: &Error) -> StStatus {
    match e {
        Error::Config(_) => StStatus::ConfigError,
        Error::OutOfOrderFrame { .. } => StStatus::OutOfOrderFrame,
        Error::MalformedDetection(_) | Error::InvalidBox { .. } => StStatus::MalformedDetection,
        _ => StStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> StStatus) -> StStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(StStatus::Panic, "internal panic"),
    }
}

fn to_box(b: &StBox) -> Result<BBox3D, Error> {
    BBox3D::new(b.center_x, b.center_y, b.center_z, b.length, b.width, b.height, b.yaw)
}

fn from_box(b: &BBox3D) -> StBox {
    StBox {
        center_x: b.center_x,
        center_y: b.center_y,
        center_z: b.center_z,
        length: b.length,
        width: b.width,
        height: b.height,
        yaw: b.yaw,
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, StStatus> {
    if p.is_null() {
        return Err(fail(StStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(StStatus::InvalidArgument, &format!("{what} is not valid UTF-8")))
}

unsafe fn new_tracker(config: Result<TrackerConfig, Error>, out: *mut *mut StTracker) -> StStatus {
    let tracker = match config.and_then(Tracker::new) {
        Ok(t) => t,
        Err(e) => return fail(status_of(&e), &e.to_string()),
    };
    *out = Box::into_raw(Box::new(StTracker {
        tracker,
        outputs: Vec::new(),
        class_names: Vec::new(),
    }));
    StStatus::Ok
}

/// Creates a tracker from a named profile (`"wod"` or `"nuscenes"`).
///
/// # Safety
/// `profile` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_new_profile(profile: *const c_char, out: *mut *mut StTracker) -> StStatus {
    guard(|| {
        if out.is_null() {
            return fail(StStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let name = match read_str(profile, "profile") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let config = Profile::parse(name)
            .map(|p| p.config())
            .ok_or_else(|| Error::Config(format!("unknown profile `{name}`")));
        new_tracker(config, out)
    })
}

/// Creates a tracker from configuration text in the key-value format.
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_new_config(config_text: *const c_char, out: *mut *mut StTracker) -> StStatus {
    guard(|| {
        if out.is_null() {
            return fail(StStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        match read_str(config_text, "config_text") {
            Ok(text) => new_tracker(parse_config(text), out),
            Err(status) => status,
        }
    })
}

/// Releases a tracker. Passing null is a no-op.
///
/// # Safety
/// `tracker` must come from a constructor in this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_free(tracker: *mut StTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Runs one frame. Frame indices must strictly increase.
///
/// On success `out_count` receives the number of outputs for this frame,
/// which is zero on non-evaluation frames.
///
/// # Safety
/// `tracker` must be valid, `detections` must point to `count` entries (it
/// may be null when `count` is 0), and `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_push_frame(
    tracker: *mut StTracker,
    frame_index: u64,
    is_evaluation_frame: bool,
    detections: *const StDetection,
    count: usize,
    out_count: *mut usize,
) -> StStatus {
    guard(|| {
        if tracker.is_null() || out_count.is_null() || (detections.is_null() && count > 0) {
            return fail(StStatus::NullPointer, "tracker, detections, or out_count is null");
        }
        let t = &mut *tracker;
        let raw: &[StDetection] = if count == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(detections, count)
        };
        let mut dets = Vec::with_capacity(count);
        for (i, d) in raw.iter().enumerate() {
            let class = match read_str(d.class_name, "class_name") {
                Ok(s) => s,
                Err(status) => return status,
            };
            let bbox = match to_box(&d.bbox) {
                Ok(b) => b,
                Err(e) => return fail(StStatus::MalformedDetection, &format!("detection {i}: {e}")),
            };
            let mut det = Detection::new(bbox, d.score, class);
            if d.has_velocity {
                det = det.with_velocity(d.velocity_x, d.velocity_y);
            }
            dets.push(det);
        }
        let mut frame = Frame::new("ffi", frame_index, dets);
        frame.is_evaluation_frame = is_evaluation_frame;
        match t.tracker.process_frame(&frame) {
            Ok(outputs) => {
                t.class_names = outputs
                    .iter()
                    .map(|o| CString::new(o.class.replace('\0', " ")).unwrap_or_default())
                    .collect();
                t.outputs = outputs;
                *out_count = t.outputs.len();
                StStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Copies the outputs of the last pushed frame into `buffer`.
///
/// `written` always receives the number of available outputs. When
/// `capacity` is smaller, nothing is copied and `BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `tracker` must be valid, `buffer` must hold `capacity` entries (it may be
/// null when `capacity` is 0), and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_outputs(
    tracker: *const StTracker,
    buffer: *mut StTrack,
    capacity: usize,
    written: *mut usize,
) -> StStatus {
    guard(|| {
        if tracker.is_null() || written.is_null() {
            return fail(StStatus::NullPointer, "tracker or written is null");
        }
        let t = &*tracker;
        *written = t.outputs.len();
        if capacity < t.outputs.len() {
            return fail(
                StStatus::BufferTooSmall,
                &format!("{} outputs do not fit in {capacity} slots", t.outputs.len()),
            );
        }
        if t.outputs.is_empty() {
            return StStatus::Ok;
        }
        if buffer.is_null() {
            return fail(StStatus::NullPointer, "buffer is null");
        }
        let slots = std::slice::from_raw_parts_mut(buffer, capacity);
        for ((slot, o), name) in slots.iter_mut().zip(&t.outputs).zip(&t.class_names) {
            *slot = StTrack {
                frame_index: o.frame_index,
                track_id: o.track_id,
                bbox: from_box(&o.bbox),
                score: o.score,
                class_name: name.as_ptr(),
                is_prediction: o.source == StateSource::MotionPrediction,
            };
        }
        StStatus::Ok
    })
}

/// Number of live tracklets, including tentative ones.
///
/// # Safety
/// `tracker` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn st_tracker_live_count(tracker: *const StTracker) -> usize {
    if tracker.is_null() {
        0
    } else {
        (*tracker).tracker.tracklets().len()
    }
}

unsafe fn overlap(a: *const StBox, b: *const StBox, out: *mut f64, f: fn(&BBox3D, &BBox3D) -> f64) -> StStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(StStatus::NullPointer, "box or out pointer is null");
        }
        match (to_box(&*a), to_box(&*b)) {
            (Ok(a), Ok(b)) => {
                *out = f(&a, &b);
                StStatus::Ok
            }
            (Err(e), _) | (_, Err(e)) => fail(StStatus::InvalidArgument, &e.to_string()),
        }
    })
}

/// Volumetric IoU of two boxes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn st_iou_3d(a: *const StBox, b: *const StBox, out: *mut f64) -> StStatus {
    overlap(a, b, out, iou_3d)
}

/// Generalized IoU of two boxes, in `[-1, 1]`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn st_giou_3d(a: *const StBox, b: *const StBox, out: *mut f64) -> StStatus {
    overlap(a, b, out, giou_3d)
}

/// Message of the last failed call on this thread, or an empty string.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn st_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a NUL-terminated string.
#[no_mangle]
pub extern "C" fn st_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
