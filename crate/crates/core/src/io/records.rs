//! Newline-delimited JSON records for detections, tracks, and ground truth.
//!
//! Every file may begin with a header line `{"format_version":1}`. Writers
//! emit the header for non-empty outputs and format floats with six decimal
//! places in a fixed field order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Matrix4;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::BBox3D;
use crate::lifecycle::StateSource;
use crate::tracker::Frame;

pub const FORMAT_VERSION: u32 = 1;

/// One detection, or a bare frame marker when `class`, `score`, and `box`
/// are all absent. Markers keep detection-free frames in the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub sequence_id: String,
    pub frame_index: u64,
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 7]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_evaluation_frame: Option<bool>,
    /// Row-major world-from-ego transform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego_pose: Option<[f64; 16]>,
}

/// One reported tracklet state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub sequence_id: String,
    pub frame_index: u64,
    pub track_id: u64,
    pub class: String,
    pub score: f64,
    pub bbox: BBox3D,
    pub source: StateSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub sequence_id: String,
    pub frame_index: u64,
    pub gt_id: u64,
    pub class: String,
    pub bbox: BBox3D,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackWire {
    sequence_id: String,
    frame_index: u64,
    track_id: u64,
    class: String,
    score: f64,
    #[serde(rename = "box")]
    bbox: [f64; 7],
    source: StateSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GtWire {
    sequence_id: String,
    frame_index: u64,
    gt_id: u64,
    class: String,
    #[serde(rename = "box")]
    bbox: [f64; 7],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
}

fn parse_box(line: usize, raw: [f64; 7]) -> Result<BBox3D> {
    BBox3D::from_array(raw).map_err(|e| match e {
        Error::InvalidBox { field, reason } => Error::Schema {
            line,
            field: field.to_string(),
            message: reason.to_string(),
        },
        other => other,
    })
}

/// Parses NDJSON text into records, skipping blank lines and the header.
fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if out.is_empty() && trimmed.contains("\"format_version\"") {
            let h: Header = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if h.format_version != FORMAT_VERSION {
                return Err(Error::Schema {
                    line,
                    field: "format_version".into(),
                    message: format!("unsupported version {}", h.format_version),
                });
            }
            continue;
        }
        let rec = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push((line, rec));
    }
    Ok(out)
}

fn schema(line: usize, field: &str, message: &str) -> Error {
    Error::Schema {
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

fn pose_matrix(line: usize, raw: &[f64; 16]) -> Result<Matrix4<f64>> {
    if !raw.iter().all(|v| v.is_finite()) {
        return Err(Error::Schema {
            line,
            field: "ego_pose".into(),
            message: "must be finite".into(),
        });
    }
    Ok(Matrix4::from_row_slice(raw))
}

/// Groups detection records into frames ordered by sequence, then frame index.
pub fn parse_detections(text: &str) -> Result<Vec<Frame>> {
    let mut frames: BTreeMap<(String, u64), Frame> = BTreeMap::new();
    for (line, rec) in parse_lines::<DetectionRecord>(text)? {
        if !rec.timestamp.is_finite() {
            return Err(schema(line, "timestamp", "must be finite"));
        }
        let pose = rec.ego_pose.as_ref().map(|p| pose_matrix(line, p)).transpose()?;
        let frame = frames
            .entry((rec.sequence_id.clone(), rec.frame_index))
            .or_insert_with(|| Frame {
                sequence_id: rec.sequence_id.clone(),
                frame_index: rec.frame_index,
                timestamp: rec.timestamp,
                is_evaluation_frame: rec.is_evaluation_frame.unwrap_or(true),
                detections: Vec::new(),
                ego_pose: pose,
            });
        if let Some(flag) = rec.is_evaluation_frame {
            frame.is_evaluation_frame = flag;
        }
        if frame.ego_pose.is_none() {
            frame.ego_pose = pose;
        }
        let (class, score, raw_box) = match (rec.class, rec.score, rec.bbox) {
            (None, None, None) => continue,
            (Some(c), Some(s), Some(b)) => (c, s, b),
            (None, _, _) => return Err(schema(line, "class", "missing")),
            (_, None, _) => return Err(schema(line, "score", "missing")),
            (_, _, None) => return Err(schema(line, "box", "missing")),
        };
        check_score(line, score)?;
        if let Some(v) = rec.velocity {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(schema(line, "velocity", "must be finite"));
            }
        }
        frame.detections.push(Detection {
            bbox: parse_box(line, raw_box)?,
            score,
            class,
            velocity: rec.velocity,
        });
    }
    Ok(frames.into_values().collect())
}

pub fn load_detections(path: &Path) -> Result<Vec<Frame>> {
    parse_detections(&fs::read_to_string(path)?)
}

fn pose_row_major(m: &Matrix4<f64>) -> [f64; 16] {
    let mut raw = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            raw[r * 4 + c] = m[(r, c)];
        }
    }
    raw
}

/// Flattens frames into records; a frame without detections becomes a marker.
pub fn detection_records(frames: &[Frame]) -> Vec<DetectionRecord> {
    let mut out = Vec::new();
    for f in frames {
        let base = DetectionRecord {
            sequence_id: f.sequence_id.clone(),
            frame_index: f.frame_index,
            timestamp: f.timestamp,
            class: None,
            score: None,
            bbox: None,
            velocity: None,
            is_evaluation_frame: Some(f.is_evaluation_frame),
            ego_pose: f.ego_pose.as_ref().map(pose_row_major),
        };
        if f.detections.is_empty() {
            out.push(base);
            continue;
        }
        for d in &f.detections {
            out.push(DetectionRecord {
                class: Some(d.class.clone()),
                score: Some(d.score),
                bbox: Some(d.bbox.to_array()),
                velocity: d.velocity,
                ..base.clone()
            });
        }
    }
    out
}

fn fmt_f64(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        // avoid "-0.000000"
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn fmt_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
    format!("[{}]", parts.join(","))
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn header_line() -> String {
    format!("{{\"format_version\":{FORMAT_VERSION}}}\n")
}

pub fn format_detection(rec: &DetectionRecord) -> String {
    let mut s = format!(
        "{{\"sequence_id\":{},\"frame_index\":{},\"timestamp\":{}",
        json_str(&rec.sequence_id),
        rec.frame_index,
        fmt_f64(rec.timestamp),
    );
    if let Some(c) = &rec.class {
        let _ = write!(s, ",\"class\":{}", json_str(c));
    }
    if let Some(v) = rec.score {
        let _ = write!(s, ",\"score\":{}", fmt_f64(v));
    }
    if let Some(b) = rec.bbox {
        let _ = write!(s, ",\"box\":{}", fmt_array(&b));
    }
    if let Some(v) = rec.velocity {
        let _ = write!(s, ",\"velocity\":{}", fmt_array(&v));
    }
    if let Some(e) = rec.is_evaluation_frame {
        let _ = write!(s, ",\"is_evaluation_frame\":{e}");
    }
    if let Some(p) = rec.ego_pose {
        let _ = write!(s, ",\"ego_pose\":{}", fmt_array(&p));
    }
    s.push('}');
    s
}

pub fn format_track(rec: &TrackRecord) -> String {
    format!(
        "{{\"sequence_id\":{},\"frame_index\":{},\"track_id\":{},\"class\":{},\"score\":{},\"box\":{},\"source\":\"{}\"}}",
        json_str(&rec.sequence_id),
        rec.frame_index,
        rec.track_id,
        json_str(&rec.class),
        fmt_f64(rec.score),
        fmt_array(&rec.bbox.to_array()),
        rec.source.as_str(),
    )
}

pub fn format_gt(rec: &GtRecord) -> String {
    format!(
        "{{\"sequence_id\":{},\"frame_index\":{},\"gt_id\":{},\"class\":{},\"box\":{}}}",
        json_str(&rec.sequence_id),
        rec.frame_index,
        rec.gt_id,
        json_str(&rec.class),
        fmt_array(&rec.bbox.to_array()),
    )
}

fn render<T>(items: &[T], line: impl Fn(&T) -> String) -> String {
    if items.is_empty() {
        return String::new();
    }
    let mut out = header_line();
    for item in items {
        out.push_str(&line(item));
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn render_tracks(stream: &[TrackRecord]) -> String {
    render(stream, format_track)
}

pub fn render_detections(records: &[DetectionRecord]) -> String {
    render(records, format_detection)
}

pub fn render_gt(records: &[GtRecord]) -> String {
    render(records, format_gt)
}

pub fn write_tracks(stream: &[TrackRecord], path: &Path) -> Result<()> {
    write_text(path, &render_tracks(stream))
}

pub fn write_detections(records: &[DetectionRecord], path: &Path) -> Result<()> {
    write_text(path, &render_detections(records))
}

pub fn write_gt(records: &[GtRecord], path: &Path) -> Result<()> {
    write_text(path, &render_gt(records))
}

fn check_score(line: usize, score: f64) -> Result<()> {
    if score.is_finite() && (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(schema(line, "score", "must lie in [0, 1]"))
    }
}

pub fn parse_tracks(text: &str) -> Result<Vec<TrackRecord>> {
    let mut seen = std::collections::HashSet::new();
    parse_lines::<TrackWire>(text)?
        .into_iter()
        .map(|(line, w)| {
            check_score(line, w.score)?;
            if !seen.insert((w.sequence_id.clone(), w.frame_index, w.track_id)) {
                return Err(Error::Schema {
                    line,
                    field: "track_id".into(),
                    message: "duplicated within its frame".into(),
                });
            }
            Ok(TrackRecord {
                bbox: parse_box(line, w.bbox)?,
                sequence_id: w.sequence_id,
                frame_index: w.frame_index,
                track_id: w.track_id,
                class: w.class,
                score: w.score,
                source: w.source,
            })
        })
        .collect()
}

pub fn load_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    parse_tracks(&fs::read_to_string(path)?)
}

pub fn parse_gt(text: &str) -> Result<Vec<GtRecord>> {
    let mut seen = std::collections::HashSet::new();
    parse_lines::<GtWire>(text)?
        .into_iter()
        .map(|(line, w)| {
            if !seen.insert((w.sequence_id.clone(), w.frame_index, w.gt_id)) {
                return Err(Error::Schema {
                    line,
                    field: "gt_id".into(),
                    message: "duplicated within its frame".into(),
                });
            }
            Ok(GtRecord {
                bbox: parse_box(line, w.bbox)?,
                sequence_id: w.sequence_id,
                frame_index: w.frame_index,
                gt_id: w.gt_id,
                class: w.class,
            })
        })
        .collect()
}

pub fn load_gt(path: &Path) -> Result<Vec<GtRecord>> {
    parse_gt(&fs::read_to_string(path)?)
}
