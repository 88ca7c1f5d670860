use std::collections::{BTreeMap, HashMap};

use super::clear_mot::match_frame;
use super::Matcher;
use crate::io::records::{GtRecord, TrackRecord};
use crate::lifecycle::StateSource;
use crate::tracker::Frame;

fn gt_index(gts: &[GtRecord]) -> HashMap<(&str, u64, &str), Vec<&GtRecord>> {
    let mut out: HashMap<(&str, u64, &str), Vec<&GtRecord>> = HashMap::new();
    for g in gts {
        out.entry((g.sequence_id.as_str(), g.frame_index, g.class.as_str()))
            .or_default()
            .push(g);
    }
    out
}

/// Keeps exactly the track boxes that are feasible matches for some
/// same-class ground-truth box on their frame.
///
/// Run the tracker with output gating disabled so every candidate frame is
/// available to the filter.
pub fn oracle_gt_output(tracks: &[TrackRecord], gts: &[GtRecord], matcher: &Matcher) -> Vec<TrackRecord> {
    let index = gt_index(gts);
    tracks
        .iter()
        .filter(|t| {
            index
                .get(&(t.sequence_id.as_str(), t.frame_index, t.class.as_str()))
                .is_some_and(|gs| gs.iter().any(|g| matcher.affinity(&t.class, &t.bbox, &g.bbox).is_some()))
        })
        .cloned()
        .collect()
}

/// Matches raw detections to ground truth frame by frame and keeps the
/// matched ones under the ground-truth identity.
///
/// Scores and boxes come from the detections; unmatched detections are dropped.
pub fn oracle_gt_all(frames: &[Frame], gts: &[GtRecord], matcher: &Matcher) -> Vec<TrackRecord> {
    let index = gt_index(gts);
    let no_history = HashMap::new();
    let mut out = Vec::new();
    for frame in frames {
        let mut by_class: BTreeMap<&str, Vec<TrackRecord>> = BTreeMap::new();
        for d in &frame.detections {
            by_class.entry(&d.class).or_default().push(TrackRecord {
                sequence_id: frame.sequence_id.clone(),
                frame_index: frame.frame_index,
                track_id: 0,
                class: d.class.clone(),
                score: d.score,
                bbox: d.bbox,
                source: StateSource::Detection,
            });
        }
        for (class, dets) in by_class {
            let Some(gs) = index.get(&(frame.sequence_id.as_str(), frame.frame_index, class)) else {
                continue;
            };
            let refs: Vec<&TrackRecord> = dets.iter().collect();
            let m = match_frame(&refs, gs, matcher, &no_history);
            for (d, g) in m.pairs {
                out.push(TrackRecord {
                    track_id: gs[g].gt_id,
                    ..dets[d].clone()
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.sequence_id, a.frame_index, a.track_id).cmp(&(&b.sequence_id, b.frame_index, b.track_id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::Detection;
    use crate::geometry::BBox3D;
    use crate::metrics::{clear_mot, EvalConfig};

    fn cube(x: f64) -> BBox3D {
        BBox3D::new(x, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    fn gt(frame: u64, id: u64, x: f64) -> GtRecord {
        GtRecord {
            sequence_id: "s".into(),
            frame_index: frame,
            gt_id: id,
            class: "vehicle".into(),
            bbox: cube(x),
        }
    }

    fn trk(frame: u64, id: u64, x: f64) -> TrackRecord {
        TrackRecord {
            sequence_id: "s".into(),
            frame_index: frame,
            track_id: id,
            class: "vehicle".into(),
            score: 0.5,
            bbox: cube(x),
            source: StateSource::Detection,
        }
    }

    fn det(x: f64) -> Detection {
        Detection::new(cube(x), 0.8, "vehicle")
    }

    #[test]
    fn gt_output_filters_per_box() {
        let g = [gt(0, 1, 0.0), gt(1, 1, 1.0)];
        let t = [trk(0, 5, 0.0), trk(0, 6, 30.0), trk(1, 5, 1.2), trk(1, 6, 1.9)];
        let m = EvalConfig::default().matcher;
        let out = oracle_gt_output(&t, &g, &m);
        // brute force: IoU of unit cubes offset by d is (1-d)/(1+d)
        let expected: Vec<_> = t
            .iter()
            .filter(|r| g.iter().any(|x| x.frame_index == r.frame_index && crate::geometry::iou_3d(&r.bbox, &x.bbox) >= 0.5))
            .cloned()
            .collect();
        assert_eq!(out, expected);
        assert_eq!(out.len(), 2);
        assert!(oracle_gt_output(&[trk(0, 1, 40.0)], &g, &m).is_empty());
    }

    #[test]
    fn gt_all_with_exact_detections_is_perfect() {
        let g: Vec<_> = (0..3).flat_map(|f| [gt(f, 1, 0.0), gt(f, 2, 5.0)]).collect();
        let frames: Vec<_> = (0..3).map(|f| Frame::new("s", f, vec![det(5.0), det(0.0), det(80.0)])).collect();
        let out = oracle_gt_all(&frames, &g, &EvalConfig::default().matcher);
        let r = clear_mot(&out, &g, &EvalConfig::default()).unwrap();
        assert_eq!((r.overall.fp, r.overall.ids, r.overall.fn_), (0, 0, 0));
    }

    #[test]
    fn gt_all_counts_dropped_detections() {
        let g: Vec<_> = (0..4).flat_map(|f| [gt(f, 1, 0.0), gt(f, 2, 5.0)]).collect();
        let frames: Vec<_> = (0..4)
            .map(|f| {
                let mut d = vec![det(0.0), det(5.0)];
                if f == 1 {
                    d.remove(0);
                }
                if f == 3 {
                    d.remove(1);
                }
                Frame::new("s", f, d)
            })
            .collect();
        let out = oracle_gt_all(&frames, &g, &EvalConfig::default().matcher);
        let r = clear_mot(&out, &g, &EvalConfig::default()).unwrap();
        assert_eq!((r.overall.fp, r.overall.ids, r.overall.fn_), (0, 0, 2));
        let clutter = [Frame::new("s", 0, vec![det(50.0)])];
        assert!(oracle_gt_all(&clutter, &g, &EvalConfig::default().matcher).is_empty());
    }
}
