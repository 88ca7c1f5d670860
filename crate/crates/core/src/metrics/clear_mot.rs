use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::{EvalConfig, Matcher};
use crate::error::{Error, Result};
use crate::geometry::iou_3d;
use crate::io::records::{GtRecord, TrackRecord};

/// Recall-normalized MOTA as reported next to AMOTA.
pub const MOTAR_FORMULA: &str = "MOTAR = max(0, 1 - (IDS + FP + FN - (1 - r) * P) / (r * P)), r = TP / P";

/// Correspondences on one frame, as indices into the inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameMatch {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Matches one frame of one class.
///
/// A ground-truth object first keeps the track it was last matched to
/// (`previous`, keyed by gt id) when that pair is still feasible. The rest
/// are paired greedily by descending affinity, ties broken by index.
pub fn match_frame(
    tracks: &[&TrackRecord],
    gts: &[&GtRecord],
    matcher: &Matcher,
    previous: &HashMap<u64, u64>,
) -> FrameMatch {
    let mut track_used = vec![false; tracks.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (g, gt) in gts.iter().enumerate() {
        let Some(&tid) = previous.get(&gt.gt_id) else {
            continue;
        };
        if let Some(t) = tracks.iter().position(|t| t.track_id == tid) {
            if !track_used[t] && matcher.affinity(&gt.class, &tracks[t].bbox, &gt.bbox).is_some() {
                track_used[t] = true;
                gt_used[g] = true;
                pairs.push((t, g));
            }
        }
    }
    let mut candidates = Vec::new();
    for (t, tr) in tracks.iter().enumerate() {
        if track_used[t] {
            continue;
        }
        for (g, gt) in gts.iter().enumerate() {
            if gt_used[g] {
                continue;
            }
            if let Some(a) = matcher.affinity(&gt.class, &tr.bbox, &gt.bbox) {
                candidates.push((a, t, g));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, t, g) in candidates {
        if !track_used[t] && !gt_used[g] {
            track_used[t] = true;
            gt_used[g] = true;
            pairs.push((t, g));
        }
    }
    pairs.sort_unstable();
    FrameMatch {
        pairs,
        unmatched_tracks: (0..tracks.len()).filter(|&t| !track_used[t]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&g| !gt_used[g]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdsCause {
    /// The previous track was still reporting boxes, for another object or
    /// for none, when the switch happened.
    WrongAssociation,
    /// The previous track emitted nothing from the last match through the
    /// switch frame: it died or went silent.
    EarlyTermination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdsEvent {
    pub sequence_id: String,
    pub frame_index: u64,
    pub gt_id: u64,
    pub previous_track: u64,
    pub new_track: u64,
    pub cause: IdsCause,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IdsBreakdown {
    pub wrong_association: usize,
    pub early_termination: usize,
}

/// Raw CLEAR-MOT counts for one class.
#[derive(Debug, Clone, Default)]
pub(crate) struct Accumulation {
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub localization_error: f64,
    pub match_scores: Vec<f64>,
    pub events: Vec<IdsEvent>,
}

type FrameGroups<'a, T> = BTreeMap<String, BTreeMap<u64, Vec<&'a T>>>;

fn by_sequence_frame<'a, T>(
    items: impl Iterator<Item = &'a T>,
    key: impl Fn(&T) -> (&str, u64),
) -> FrameGroups<'a, T> {
    let mut out: FrameGroups<'a, T> = BTreeMap::new();
    for item in items {
        let (seq, frame) = key(item);
        out.entry(seq.to_string())
            .or_default()
            .entry(frame)
            .or_default()
            .push(item);
    }
    out
}

pub(crate) fn accumulate(tracks: &[&TrackRecord], gts: &[&GtRecord], matcher: &Matcher) -> Accumulation {
    let tracks = by_sequence_frame(tracks.iter().copied(), |t| (&t.sequence_id, t.frame_index));
    let gts = by_sequence_frame(gts.iter().copied(), |g| (&g.sequence_id, g.frame_index));
    let sequences: BTreeSet<&String> = tracks.keys().chain(gts.keys()).collect();
    let no_tracks = BTreeMap::new();
    let no_gts = BTreeMap::new();
    let mut acc = Accumulation::default();
    for seq in sequences {
        let seq_tracks = tracks.get(seq).unwrap_or(&no_tracks);
        let seq_gts = gts.get(seq).unwrap_or(&no_gts);
        let mut emitted: HashMap<u64, BTreeSet<u64>> = HashMap::new();
        for (frame, ts) in seq_tracks {
            for t in ts {
                emitted.entry(t.track_id).or_default().insert(*frame);
            }
        }
        let frames: BTreeSet<u64> = seq_tracks.keys().chain(seq_gts.keys()).copied().collect();
        // gt id -> (track id, frame of that match)
        let mut last: HashMap<u64, (u64, u64)> = HashMap::new();
        for frame in frames {
            let ts: &[&TrackRecord] = seq_tracks.get(&frame).map_or(&[], Vec::as_slice);
            let gs: &[&GtRecord] = seq_gts.get(&frame).map_or(&[], Vec::as_slice);
            let previous: HashMap<u64, u64> = last.iter().map(|(g, (t, _))| (*g, *t)).collect();
            let m = match_frame(ts, gs, matcher, &previous);
            acc.gt += gs.len();
            acc.tp += m.pairs.len();
            acc.fp += m.unmatched_tracks.len();
            acc.fn_ += m.unmatched_gts.len();
            let matched_tracks: HashMap<u64, u64> = m
                .pairs
                .iter()
                .map(|&(t, g)| (ts[t].track_id, gs[g].gt_id))
                .collect();
            for &(t, g) in &m.pairs {
                let (tr, gt) = (ts[t], gs[g]);
                acc.localization_error += 1.0 - iou_3d(&tr.bbox, &gt.bbox);
                acc.match_scores.push(tr.score);
                if let Some(&(prev, prev_frame)) = last.get(&gt.gt_id) {
                    if prev != tr.track_id {
                        acc.ids += 1;
                        let silent = emitted
                            .get(&prev)
                            .is_none_or(|f| f.range(prev_frame + 1..=frame).next().is_none());
                        let cause = if silent && !matched_tracks.contains_key(&prev) {
                            IdsCause::EarlyTermination
                        } else {
                            IdsCause::WrongAssociation
                        };
                        acc.events.push(IdsEvent {
                            sequence_id: seq.clone(),
                            frame_index: frame,
                            gt_id: gt.gt_id,
                            previous_track: prev,
                            new_track: tr.track_id,
                            cause,
                        });
                    }
                }
                last.insert(gt.gt_id, (tr.track_id, frame));
            }
        }
    }
    acc
}

/// Per-class CLEAR-MOT summary in the column layout of the evaluation tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: String,
    pub gt_count: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub mota: f64,
    /// Mean `1 - IoU` over matches.
    pub motp: f64,
    /// `100 * IDS / GT`.
    pub ids_pct: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub recall: f64,
    pub ids_breakdown: IdsBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amota: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amotp: Option<f64>,
}

impl ClassReport {
    pub(crate) fn from_counts(class: &str, acc: &Accumulation) -> Self {
        let gt = acc.gt as f64;
        let per_gt = |n: usize| if acc.gt == 0 { 0.0 } else { n as f64 / gt };
        let mut breakdown = IdsBreakdown::default();
        for e in &acc.events {
            match e.cause {
                IdsCause::WrongAssociation => breakdown.wrong_association += 1,
                IdsCause::EarlyTermination => breakdown.early_termination += 1,
            }
        }
        Self {
            class: class.to_string(),
            gt_count: acc.gt,
            tp: acc.tp,
            fp: acc.fp,
            fn_: acc.fn_,
            ids: acc.ids,
            mota: 1.0 - per_gt(acc.fp + acc.fn_ + acc.ids),
            motp: if acc.tp == 0 {
                1.0
            } else {
                acc.localization_error / acc.tp as f64
            },
            ids_pct: 100.0 * per_gt(acc.ids),
            fp_rate: per_gt(acc.fp),
            fn_rate: per_gt(acc.fn_),
            recall: per_gt(acc.tp),
            ids_breakdown: breakdown,
            amota: None,
            amotp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    pub overall: ClassReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motar_formula: Option<&'static str>,
}

impl EvalReport {
    pub fn class(&self, name: &str) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

pub(crate) fn split_by_class<'a>(
    tracks: &'a [TrackRecord],
    gts: &'a [GtRecord],
) -> BTreeMap<&'a str, (Vec<&'a TrackRecord>, Vec<&'a GtRecord>)> {
    let mut out: BTreeMap<&str, (Vec<&TrackRecord>, Vec<&GtRecord>)> = BTreeMap::new();
    for g in gts {
        out.entry(&g.class).or_default().1.push(g);
    }
    for t in tracks {
        if let Some(entry) = out.get_mut(t.class.as_str()) {
            entry.0.push(t);
        }
    }
    out
}

/// CLEAR-MOT over all classes present in the ground truth.
///
/// Tracks whose class never occurs in the ground truth are ignored.
pub fn clear_mot(tracks: &[TrackRecord], gts: &[GtRecord], eval: &EvalConfig) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let mut total = Accumulation::default();
    let mut classes = Vec::new();
    for (class, (ts, gs)) in split_by_class(tracks, gts) {
        let acc = accumulate(&ts, &gs, &eval.matcher);
        classes.push(ClassReport::from_counts(class, &acc));
        total.gt += acc.gt;
        total.tp += acc.tp;
        total.fp += acc.fp;
        total.fn_ += acc.fn_;
        total.ids += acc.ids;
        total.localization_error += acc.localization_error;
        total.events.extend(acc.events);
    }
    Ok(EvalReport {
        classes,
        overall: ClassReport::from_counts("all", &total),
        motar_formula: None,
    })
}

/// CLEAR-MOT, plus AMOTA/AMOTP per class when `num_thresholds` is set.
pub fn evaluate(
    tracks: &[TrackRecord],
    gts: &[GtRecord],
    eval: &EvalConfig,
    num_thresholds: Option<usize>,
) -> Result<EvalReport> {
    let mut report = clear_mot(tracks, gts, eval)?;
    if let Some(n) = num_thresholds {
        let by_class = split_by_class(tracks, gts);
        let mut sum_a = 0.0;
        let mut sum_p = 0.0;
        for c in &mut report.classes {
            let (ts, gs) = &by_class[c.class.as_str()];
            let r = super::amota::amota_refs(ts, gs, &eval.matcher, n);
            c.amota = Some(r.amota);
            c.amotp = Some(r.amotp);
            sum_a += r.amota;
            sum_p += r.amotp;
        }
        let k = report.classes.len().max(1) as f64;
        report.overall.amota = Some(sum_a / k);
        report.overall.amotp = Some(sum_p / k);
        report.motar_formula = Some(MOTAR_FORMULA);
    }
    Ok(report)
}

/// Every ID switch with its cause, in sequence and frame order per class.
pub fn classify_id_switches(tracks: &[TrackRecord], gts: &[GtRecord], eval: &EvalConfig) -> Vec<IdsEvent> {
    split_by_class(tracks, gts)
        .into_values()
        .flat_map(|(ts, gs)| accumulate(&ts, &gs, &eval.matcher).events)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox3D;
    use crate::lifecycle::StateSource;

    fn cube(x: f64) -> BBox3D {
        BBox3D::new(x, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    pub(crate) fn gt(frame: u64, id: u64, x: f64) -> GtRecord {
        GtRecord {
            sequence_id: "s".into(),
            frame_index: frame,
            gt_id: id,
            class: "vehicle".into(),
            bbox: cube(x),
        }
    }

    pub(crate) fn trk(frame: u64, id: u64, x: f64) -> TrackRecord {
        TrackRecord {
            sequence_id: "s".into(),
            frame_index: frame,
            track_id: id,
            class: "vehicle".into(),
            score: 0.9,
            bbox: cube(x),
            source: StateSource::Detection,
        }
    }

    fn eval() -> EvalConfig {
        EvalConfig::default()
    }

    #[test]
    fn perfect_frame_match() {
        let g = [gt(0, 1, 0.0), gt(0, 2, 5.0)];
        let t = [trk(0, 7, 5.0), trk(0, 8, 0.0)];
        let m = match_frame(&t.iter().collect::<Vec<_>>(), &g.iter().collect::<Vec<_>>(), &eval().matcher, &HashMap::new());
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert!(m.unmatched_tracks.is_empty() && m.unmatched_gts.is_empty());
    }

    #[test]
    fn lone_track_is_false_positive() {
        let g = [gt(0, 1, 0.0)];
        let t = [trk(0, 1, 50.0)];
        let r = clear_mot(&t, &g, &eval()).unwrap();
        assert_eq!((r.overall.fp, r.overall.fn_), (1, 1));
        let m = match_frame(&[&t[0]], &[], &eval().matcher, &HashMap::new());
        assert_eq!(m.unmatched_tracks, vec![0]);
    }

    #[test]
    fn carry_over_prefers_previous_track() {
        let g = [gt(0, 1, 0.0)];
        let t = [trk(0, 3, 0.3), trk(0, 4, 0.0)];
        let prev = HashMap::from([(1, 3)]);
        let m = match_frame(&t.iter().collect::<Vec<_>>(), &g.iter().collect::<Vec<_>>(), &eval().matcher, &prev);
        assert_eq!(m.pairs, vec![(0, 0)]);
    }

    #[test]
    fn swap_counts_one_switch_per_gt() {
        // two objects far apart; tracks exchange them from frame 2 on
        let mut g = Vec::new();
        let mut t = Vec::new();
        for f in 0..4 {
            g.push(gt(f, 1, 0.0));
            g.push(gt(f, 2, 10.0));
            let (a, b) = if f < 2 { (0.0, 10.0) } else { (10.0, 0.0) };
            t.push(trk(f, 100, a));
            t.push(trk(f, 200, b));
        }
        let r = clear_mot(&t, &g, &eval()).unwrap();
        assert_eq!(r.overall.ids, 2);
        assert_eq!(r.overall.ids_breakdown.wrong_association, 2);
        assert_eq!(r.overall.ids_breakdown.early_termination, 0);
    }

    #[test]
    fn early_termination_is_classified() {
        let mut g = Vec::new();
        let mut t = Vec::new();
        for f in 0..6 {
            g.push(gt(f, 1, 0.0));
            match f {
                0 | 1 => t.push(trk(f, 10, 0.0)),
                2 | 3 => {}
                _ => t.push(trk(f, 11, 0.0)),
            }
        }
        let r = clear_mot(&t, &g, &eval()).unwrap();
        assert_eq!(r.overall.ids, 1);
        assert_eq!(r.overall.fn_, 2);
        assert_eq!(r.overall.ids_breakdown.early_termination, 1);
        assert_eq!(r.overall.ids_breakdown.wrong_association, 0);
    }

    #[test]
    fn perfect_and_silent_trackers() {
        let g: Vec<GtRecord> = (0..5).map(|f| gt(f, 1, f as f64)).collect();
        let t: Vec<TrackRecord> = (0..5).map(|f| trk(f, 9, f as f64)).collect();
        let r = clear_mot(&t, &g, &eval()).unwrap();
        assert_eq!((r.overall.mota, r.overall.ids), (1.0, 0));
        assert_eq!(r.overall.motp, 0.0);
        let r = clear_mot(&[], &g, &eval()).unwrap();
        assert_eq!(r.overall.mota, 0.0);
        assert_eq!(r.overall.fn_, 5);
        assert!(matches!(clear_mot(&t, &[], &eval()), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn scripted_mota() {
        // 10 objects x 10 frames, one identity swap on object 0, 5 clutter boxes
        let mut g = Vec::new();
        let mut t = Vec::new();
        for f in 0..10u64 {
            for o in 0..10u64 {
                let x = o as f64 * 10.0;
                g.push(gt(f, o, x));
                let id = if o == 0 && f >= 5 { 99 } else { o };
                t.push(trk(f, id, x));
            }
            if f < 5 {
                t.push(trk(f, 500 + f, 1000.0));
            }
        }
        let r = clear_mot(&t, &g, &eval()).unwrap();
        assert_eq!(r.overall.gt_count, 100);
        assert_eq!((r.overall.fp, r.overall.fn_, r.overall.ids), (5, 0, 1));
        assert!((r.overall.mota - 0.94).abs() < 1e-12);
    }
}
