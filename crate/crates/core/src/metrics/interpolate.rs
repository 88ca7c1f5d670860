use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::{angle_diff, wrap_angle, BBox3D};
use crate::io::records::TrackRecord;
use crate::lifecycle::StateSource;

fn lerp_box(a: &BBox3D, b: &BBox3D, t: f64) -> BBox3D {
    let l = |x: f64, y: f64| x + (y - x) * t;
    BBox3D {
        center_x: l(a.center_x, b.center_x),
        center_y: l(a.center_y, b.center_y),
        center_z: l(a.center_z, b.center_z),
        length: l(a.length, b.length),
        width: l(a.width, b.width),
        height: l(a.height, b.height),
        yaw: wrap_angle(a.yaw + angle_diff(b.yaw, a.yaw) * t),
    }
}

fn interpolate_with(
    tracks: &[TrackRecord],
    allowed: impl Fn(&str, u64) -> bool,
) -> Vec<TrackRecord> {
    let mut groups: BTreeMap<(&str, u64), Vec<&TrackRecord>> = BTreeMap::new();
    for t in tracks {
        groups.entry((&t.sequence_id, t.track_id)).or_default().push(t);
    }
    let mut out = Vec::with_capacity(tracks.len());
    for ((seq, _), mut frames) in groups {
        frames.sort_by_key(|t| t.frame_index);
        let first = frames[0].score;
        let score = if frames.iter().all(|t| t.score == first) {
            first
        } else {
            frames.iter().map(|t| t.score).sum::<f64>() / frames.len() as f64
        };
        for (i, cur) in frames.iter().enumerate() {
            out.push(TrackRecord {
                score,
                ..(*cur).clone()
            });
            let Some(next) = frames.get(i + 1) else {
                continue;
            };
            let span = (next.frame_index - cur.frame_index) as f64;
            for f in cur.frame_index + 1..next.frame_index {
                if !allowed(seq, f) {
                    continue;
                }
                let t = (f - cur.frame_index) as f64 / span;
                out.push(TrackRecord {
                    frame_index: f,
                    score,
                    bbox: lerp_box(&cur.bbox, &next.bbox, t),
                    source: StateSource::MotionPrediction,
                    ..(*cur).clone()
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.sequence_id, a.frame_index, a.track_id).cmp(&(&b.sequence_id, b.frame_index, b.track_id))
    });
    out
}

/// Fills interior frame gaps of every tracklet by linear interpolation and
/// replaces each score with the tracklet mean over its original frames.
///
/// Filled frames are marked as motion predictions. Nothing is extrapolated
/// past a tracklet's first or last frame.
pub fn interpolate_tracklets(tracks: &[TrackRecord]) -> Vec<TrackRecord> {
    interpolate_with(tracks, |_, _| true)
}

/// Like [`interpolate_tracklets`], but only fills frames listed for the
/// sequence in `frames`, such as the evaluation frames of a benchmark.
pub fn interpolate_tracklets_on(
    tracks: &[TrackRecord],
    frames: &BTreeMap<String, BTreeSet<u64>>,
) -> Vec<TrackRecord> {
    interpolate_with(tracks, |seq, f| frames.get(seq).is_some_and(|s| s.contains(&f)))
}
