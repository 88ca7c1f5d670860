//! Tracklet birth, death, and output, with two-stage association.
//!
//! Stage one matches live tracklets against detections scoring at least the
//! high threshold and feeds the matches to the motion model. Stage two
//! matches what is left against detections in `[low, high)`: such a match
//! keeps the tracklet alive but neither updates its motion model nor is
//! reported as a detection frame. Only unmatched high-score detections can
//! start new tracklets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::association::{build_cost_matrix, AssociationMetric, MatchStrategy, Prediction};
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::BBox3D;
use crate::motion::{box_to_obs, KalmanParams, MotionModel, MotionModelKind};

/// A threshold with optional per-class overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassThresholds {
    pub default: f64,
    pub per_class: BTreeMap<String, f64>,
}

impl ClassThresholds {
    pub fn uniform(default: f64) -> Self {
        Self {
            default,
            per_class: BTreeMap::new(),
        }
    }

    pub fn with(mut self, class: &str, value: f64) -> Self {
        self.per_class.insert(class.to_string(), value);
        self
    }

    pub fn get(&self, class: &str) -> f64 {
        self.per_class.get(class).copied().unwrap_or(self.default)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.default).chain(self.per_class.values().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackStatus {
    Tentative,
    Active,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateSource {
    #[serde(rename = "det")]
    Detection,
    #[serde(rename = "pred")]
    MotionPrediction,
}

impl StateSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            StateSource::Detection => "det",
            StateSource::MotionPrediction => "pred",
        }
    }
}

/// The state a tracklet reports for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub frame_index: u64,
    pub bbox: BBox3D,
    pub score: f64,
    pub source: StateSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputPolicy {
    /// Regular birth/score gating.
    Gated,
    /// Every live tracklet reports every frame; used by the GT-output oracle.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifecycleConfig {
    /// `T_h`: detections at or above it are associated in stage one.
    pub score_high: ClassThresholds,
    /// `T_l`: detections in `[T_l, T_h)` are associated in stage two.
    pub score_low: ClassThresholds,
    pub min_hits: u32,
    pub max_miss: u32,
    pub output_score: ClassThresholds,
    pub output_predictions: bool,
    pub prediction_score_factor: f64,
    /// Whether a stage-two match counts as a hit.
    pub count_stage2_hits: bool,
    /// Multiply the carried score by the factor on every prediction frame
    /// instead of always scaling the last detection score.
    pub compound_prediction_score: bool,
    pub output_policy: OutputPolicy,
}

impl LifecycleConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, t: &ClassThresholds| -> Result<()> {
            if t.values().all(|v| v.is_finite() && (0.0..=1.0).contains(&v)) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} thresholds must lie in [0, 1]")))
            }
        };
        unit("score_high", &self.score_high)?;
        unit("score_low", &self.score_low)?;
        unit("output_score", &self.output_score)?;
        let classes = self
            .score_high
            .per_class
            .keys()
            .chain(self.score_low.per_class.keys())
            .map(String::as_str)
            .chain(std::iter::once(""));
        for class in classes {
            if self.score_low.get(class) > self.score_high.get(class) {
                return Err(Error::Config(format!(
                    "score_low must not exceed score_high (class `{class}`)"
                )));
            }
        }
        if self.min_hits < 1 || self.max_miss < 1 {
            return Err(Error::Config("min_hits and max_miss must be at least 1".into()));
        }
        if !(self.prediction_score_factor.is_finite() && (0.0..=1.0).contains(&self.prediction_score_factor)) {
            return Err(Error::Config("prediction_score_factor must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One tracked object.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: u64,
    pub class: String,
    pub motion: MotionModel,
    /// Consecutive associated frames.
    pub hits: u32,
    /// Consecutive missed frames.
    pub misses: u32,
    /// Frames since birth.
    pub age: u32,
    /// `S_P`: score carried into prediction frames.
    pub last_score: f64,
    pub status: TrackStatus,
    pub history: Vec<TrackFrame>,
}

impl Tracklet {
    pub fn is_alive(&self) -> bool {
        self.status != TrackStatus::Dead
    }

    /// The state recorded for `frame_index`, if any.
    pub fn frame(&self, frame_index: u64) -> Option<&TrackFrame> {
        self.history
            .last()
            .filter(|f| f.frame_index == frame_index)
    }

    fn prediction(&self, params: &KalmanParams) -> Prediction {
        Prediction {
            bbox: self.motion.predicted_box(),
            gaussian: self.motion.kalman_state().map(|s| {
                let mean = box_to_obs(&s.bbox());
                (mean, s.innovation_covariance(params))
            }),
        }
    }

    fn register_hit(&mut self, config: &LifecycleConfig, counts: bool) {
        self.misses = 0;
        if counts {
            self.hits += 1;
        }
        if self.status == TrackStatus::Tentative && self.hits >= config.min_hits {
            self.status = TrackStatus::Active;
        }
    }

    fn prediction_frame(&mut self, frame_index: u64, config: &LifecycleConfig) -> TrackFrame {
        let score = config.prediction_score_factor * self.last_score;
        if config.compound_prediction_score {
            self.last_score = score;
        }
        TrackFrame {
            frame_index,
            bbox: self.motion.predicted_box(),
            score,
            source: StateSource::MotionPrediction,
        }
    }
}

/// Hands out fresh, strictly increasing tracklet ids.
#[derive(Debug, Clone, Default)]
pub struct IdAllocator {
    next: u64,
}

impl IdAllocator {
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

/// Everything a life-cycle step needs besides the tracklets and detections.
#[derive(Debug, Clone, Copy)]
pub struct StepParams<'a> {
    pub metric: AssociationMetric,
    pub strategy: MatchStrategy,
    pub motion: MotionModelKind,
    pub kalman: &'a KalmanParams,
    pub lifecycle: &'a LifecycleConfig,
    pub frame_index: u64,
}

/// Runs both association stages for one class on one frame.
///
/// `tracklets` must already hold their motion predictions for this frame.
/// Their counters, status, and history are updated in place. Returns the
/// stage-one detections left unmatched, which are the birth candidates.
pub fn two_stage_step(
    tracklets: &mut [Tracklet],
    detections: &[Detection],
    params: &StepParams<'_>,
) -> Result<Vec<Detection>> {
    let cfg = params.lifecycle;
    let (high, low): (Vec<&Detection>, Vec<&Detection>) = detections
        .iter()
        .filter(|d| d.score >= cfg.score_low.get(&d.class))
        .partition(|d| d.score >= cfg.score_high.get(&d.class));
    let high: Vec<Detection> = high.into_iter().cloned().collect();
    let low: Vec<Detection> = low.into_iter().cloned().collect();

    let live: Vec<usize> = (0..tracklets.len())
        .filter(|&i| tracklets[i].is_alive())
        .collect();
    let preds: Vec<Prediction> = live
        .iter()
        .map(|&i| tracklets[i].prediction(params.kalman))
        .collect();

    let first = params
        .strategy
        .solve(&build_cost_matrix(&preds, &high, &params.metric)?);
    for &(r, c) in &first.matches {
        let t = &mut tracklets[live[r]];
        let det = &high[c];
        let bbox = t.motion.update(det, params.kalman);
        t.last_score = det.score;
        t.register_hit(cfg, true);
        t.history.push(TrackFrame {
            frame_index: params.frame_index,
            bbox,
            score: det.score,
            source: StateSource::Detection,
        });
    }

    let leftover: Vec<usize> = first.unmatched_rows.clone();
    let second_preds: Vec<Prediction> = leftover.iter().map(|&r| preds[r].clone()).collect();
    let second = params
        .strategy
        .solve(&build_cost_matrix(&second_preds, &low, &params.metric)?);
    for &(r, _) in &second.matches {
        let t = &mut tracklets[live[leftover[r]]];
        t.register_hit(cfg, cfg.count_stage2_hits);
        let frame = t.prediction_frame(params.frame_index, cfg);
        t.history.push(frame);
    }
    for &r in &second.unmatched_rows {
        let t = &mut tracklets[live[leftover[r]]];
        t.misses += 1;
        t.hits = 0;
        if t.status == TrackStatus::Tentative || t.misses >= cfg.max_miss {
            t.status = TrackStatus::Dead;
        } else {
            let frame = t.prediction_frame(params.frame_index, cfg);
            t.history.push(frame);
        }
    }
    for &i in &live {
        tracklets[i].age += 1;
    }

    Ok(first
        .unmatched_cols
        .into_iter()
        .map(|c| high[c].clone())
        .collect())
}

/// Starts a tracklet for every candidate.
pub fn birth(candidates: &[Detection], params: &StepParams<'_>, ids: &mut IdAllocator) -> Vec<Tracklet> {
    candidates
        .iter()
        .map(|det| {
            let status = if params.lifecycle.min_hits <= 1 {
                TrackStatus::Active
            } else {
                TrackStatus::Tentative
            };
            Tracklet {
                id: ids.next_id(),
                class: det.class.clone(),
                motion: MotionModel::new(params.motion, det, params.kalman),
                hits: 1,
                misses: 0,
                age: 0,
                last_score: det.score,
                status,
                history: vec![TrackFrame {
                    frame_index: params.frame_index,
                    bbox: det.bbox,
                    score: det.score,
                    source: StateSource::Detection,
                }],
            }
        })
        .collect()
}

/// Decides whether `frame` of `t` is emitted, and with which score.
pub fn should_output(t: &Tracklet, frame: &TrackFrame, config: &LifecycleConfig) -> Option<f64> {
    if !t.is_alive() {
        return None;
    }
    if config.output_policy == OutputPolicy::All {
        return Some(frame.score);
    }
    if t.hits < config.min_hits && t.status != TrackStatus::Active {
        return None;
    }
    let emit = match frame.source {
        StateSource::Detection => frame.score >= config.output_score.get(&t.class),
        StateSource::MotionPrediction => config.output_predictions,
    };
    emit.then_some(frame.score)
}
