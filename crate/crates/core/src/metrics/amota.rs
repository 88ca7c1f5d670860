use serde::Serialize;

use super::clear_mot::{accumulate, split_by_class};
use super::{EvalConfig, Matcher};
use crate::io::records::{GtRecord, TrackRecord};

pub const DEFAULT_NUM_THRESHOLDS: usize = 40;
/// Lowest recall target of the sweep.
pub const MIN_RECALL: f64 = 0.1;

/// `n` evenly spaced recall targets from [`MIN_RECALL`] to 1.
pub fn recall_targets(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| MIN_RECALL + (1.0 - MIN_RECALL) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallPoint {
    pub target: f64,
    /// Recall of the track subset kept at this cutoff.
    pub achieved: f64,
    /// Score cutoff, `None` when the target recall is out of reach.
    pub threshold: Option<f64>,
    pub motar: f64,
    pub motp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmotaResult {
    pub amota: f64,
    pub amotp: f64,
    pub points: Vec<RecallPoint>,
}

fn motar(ids: usize, fp: usize, fn_: usize, recall: f64, positives: f64) -> f64 {
    if recall <= 0.0 {
        return 0.0;
    }
    let errors = (ids + fp + fn_) as f64 - (1.0 - recall) * positives;
    (1.0 - errors / (recall * positives)).max(0.0)
}

pub(crate) fn amota_refs(tracks: &[&TrackRecord], gts: &[&GtRecord], matcher: &Matcher, n: usize) -> AmotaResult {
    let targets = recall_targets(n);
    let positives = gts.len();
    let full = accumulate(tracks, gts, matcher);
    let mut scores = full.match_scores;
    scores.sort_by(|a, b| b.total_cmp(a));
    let mut points = Vec::with_capacity(targets.len());
    for target in targets {
        let needed = (target * positives as f64 - 1e-9).ceil().max(1.0) as usize;
        if positives == 0 || needed > scores.len() {
            points.push(RecallPoint {
                target,
                achieved: 0.0,
                threshold: None,
                motar: 0.0,
                motp: 1.0,
            });
            continue;
        }
        let threshold = scores[needed - 1];
        let kept: Vec<&TrackRecord> = tracks.iter().copied().filter(|t| t.score >= threshold).collect();
        let acc = accumulate(&kept, gts, matcher);
        let p = positives as f64;
        let achieved = acc.tp as f64 / p;
        points.push(RecallPoint {
            target,
            achieved,
            threshold: Some(threshold),
            motar: motar(acc.ids, acc.fp, acc.fn_, achieved, p),
            motp: if acc.tp == 0 {
                1.0
            } else {
                acc.localization_error / acc.tp as f64
            },
        });
    }
    let k = points.len().max(1) as f64;
    AmotaResult {
        amota: points.iter().map(|p| p.motar).sum::<f64>() / k,
        amotp: if points.is_empty() {
            1.0
        } else {
            points.iter().map(|p| p.motp).sum::<f64>() / k
        },
        points,
    }
}

/// AMOTA averaged over the classes present in the ground truth.
///
/// Each class sweeps score cutoffs reaching the recall targets and averages
/// the recall-normalized MOTA. Targets the tracker cannot reach count as 0.
pub fn amota(tracks: &[TrackRecord], gts: &[GtRecord], eval: &EvalConfig, num_thresholds: usize) -> f64 {
    let by_class = split_by_class(tracks, gts);
    if by_class.is_empty() {
        return 0.0;
    }
    let total: f64 = by_class
        .values()
        .map(|(ts, gs)| amota_refs(ts, gs, &eval.matcher, num_thresholds).amota)
        .sum();
    total / by_class.len() as f64
}
