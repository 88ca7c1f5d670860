//! Tracking evaluation: CLEAR-MOT, AMOTA, interpolation, ID-switch causes,
//! and the ground-truth oracles.

mod amota;
mod clear_mot;
mod interpolate;
mod oracle;

pub use amota::{amota, recall_targets, AmotaResult, RecallPoint, DEFAULT_NUM_THRESHOLDS, MIN_RECALL};
pub use clear_mot::{
    classify_id_switches, clear_mot, evaluate, match_frame, ClassReport, EvalReport, FrameMatch, IdsBreakdown, IdsCause, IdsEvent,
    MOTAR_FORMULA,
};
pub use interpolate::{interpolate_tracklets, interpolate_tracklets_on};
pub use oracle::{oracle_gt_all, oracle_gt_output};

use crate::geometry::{bev_center_distance, iou_3d, BBox3D};
use crate::lifecycle::ClassThresholds;

/// How track boxes are paired with ground truth on a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Matcher {
    /// Feasible iff `iou_3d >= floor(class)`.
    Iou(ClassThresholds),
    /// Feasible iff the BEV center distance is at most this many meters.
    CenterDistance(f64),
}

impl Default for Matcher {
    fn default() -> Self {
        Matcher::Iou(ClassThresholds::uniform(0.5).with("pedestrian", 0.3))
    }
}

impl Matcher {
    pub fn iou(floor: f64) -> Self {
        Matcher::Iou(ClassThresholds::uniform(floor))
    }

    /// Larger-is-better affinity for a feasible pair, `None` otherwise.
    pub fn affinity(&self, class: &str, track: &BBox3D, gt: &BBox3D) -> Option<f64> {
        match self {
            Matcher::Iou(floors) => {
                let iou = iou_3d(track, gt);
                (iou >= floors.get(class) && iou > 0.0).then_some(iou)
            }
            Matcher::CenterDistance(max) => {
                let d = bev_center_distance(track, gt);
                (d <= *max).then_some(-d)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalConfig {
    pub matcher: Matcher,
}

