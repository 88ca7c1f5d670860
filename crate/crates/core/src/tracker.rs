//! Pipeline orchestration: pre-process, predict, associate, update, output.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::association::{AssociationMetric, MatchStrategy, MetricKind};
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::{nms, wrap_angle, BBox3D};
use crate::io::records::TrackRecord;
use crate::lifecycle::{
    birth, should_output, two_stage_step, ClassThresholds, IdAllocator, LifecycleConfig, StepParams,
    Tracklet,
};
use crate::motion::{KalmanParams, MotionModelKind};

/// One timestamped set of detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub sequence_id: String,
    pub frame_index: u64,
    pub timestamp: f64,
    /// Frames that are not evaluation frames feed the tracker but emit nothing.
    pub is_evaluation_frame: bool,
    pub detections: Vec<Detection>,
    /// World-from-ego rigid transform.
    pub ego_pose: Option<Matrix4<f64>>,
}

impl Frame {
    pub fn new(sequence_id: impl Into<String>, frame_index: u64, detections: Vec<Detection>) -> Self {
        Self {
            sequence_id: sequence_id.into(),
            frame_index,
            timestamp: frame_index as f64 * 0.1,
            is_evaluation_frame: true,
            detections,
            ego_pose: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateFrame {
    /// Transform detections with the ego pose when one is supplied.
    World,
    /// Track in raw sensor coordinates.
    Ego,
}

impl CoordinateFrame {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoordinateFrame::World => "world",
            CoordinateFrame::Ego => "ego",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "world" => Some(CoordinateFrame::World),
            "ego" => Some(CoordinateFrame::Ego),
            _ => None,
        }
    }
}

/// Gate per association metric, each with optional per-class overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGates {
    pub iou: ClassThresholds,
    pub giou: ClassThresholds,
    pub l2: ClassThresholds,
    pub mahalanobis: ClassThresholds,
}

impl Default for MetricGates {
    fn default() -> Self {
        Self {
            iou: ClassThresholds::uniform(0.1),
            giou: ClassThresholds::uniform(-0.5),
            l2: ClassThresholds::uniform(5.0),
            mahalanobis: ClassThresholds::uniform(11.0),
        }
    }
}

impl MetricGates {
    pub fn for_kind(&self, kind: MetricKind) -> &ClassThresholds {
        match kind {
            MetricKind::Iou3d => &self.iou,
            MetricKind::Giou3d => &self.giou,
            MetricKind::L2Bev => &self.l2,
            MetricKind::Mahalanobis => &self.mahalanobis,
        }
    }

    pub fn for_kind_mut(&mut self, kind: MetricKind) -> &mut ClassThresholds {
        match kind {
            MetricKind::Iou3d => &mut self.iou,
            MetricKind::Giou3d => &mut self.giou,
            MetricKind::L2Bev => &mut self.l2,
            MetricKind::Mahalanobis => &mut self.mahalanobis,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub nms_iou: f64,
    pub metric: MetricKind,
    pub gates: MetricGates,
    pub strategy: MatchStrategy,
    pub motion: MotionModelKind,
    pub kalman: KalmanParams,
    pub lifecycle: LifecycleConfig,
    pub coordinate_frame: CoordinateFrame,
}

impl TrackerConfig {
    pub fn association_metric(&self, class: &str) -> AssociationMetric {
        AssociationMetric::new(self.metric, self.gates.for_kind(self.metric).get(class))
    }

    /// Collapses two-stage association into one stage by raising `T_l` to `T_h`.
    pub fn one_stage(mut self) -> Self {
        self.lifecycle.score_low = self.lifecycle.score_high.clone();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Config(format!("nms_iou {} outside (0, 1]", self.nms_iou)));
        }
        for kind in MetricKind::ALL {
            if !self.gates.for_kind(kind).values().all(f64::is_finite) {
                return Err(Error::Config(format!("{} gate must be finite", kind.as_str())));
            }
        }
        if self.metric == MetricKind::Mahalanobis && self.motion == MotionModelKind::ConstantVelocity {
            return Err(Error::Config(
                "the Mahalanobis metric requires a Kalman motion model".into(),
            ));
        }
        self.kalman.validate()?;
        self.lifecycle.validate()
    }
}

fn transform_box(b: &BBox3D, pose: &Matrix4<f64>) -> BBox3D {
    let c = pose * Vector4::new(b.center_x, b.center_y, b.center_z, 1.0);
    let heading = pose[(1, 0)].atan2(pose[(0, 0)]);
    BBox3D {
        center_x: c[0],
        center_y: c[1],
        center_z: c[2],
        yaw: wrap_angle(b.yaw + heading),
        ..*b
    }
}

fn transform_detection(d: &Detection, pose: &Matrix4<f64>) -> Detection {
    let velocity = d.velocity.map(|[vx, vy]| {
        [
            pose[(0, 0)] * vx + pose[(0, 1)] * vy,
            pose[(1, 0)] * vx + pose[(1, 1)] * vy,
        ]
    });
    Detection {
        bbox: transform_box(&d.bbox, pose),
        velocity,
        ..d.clone()
    }
}

/// Validates, moves to the world frame, applies per-class NMS, and drops
/// detections below the low score threshold.
///
/// Output is grouped by class name, each group sorted by descending score.
pub fn preprocess(frame: &Frame, config: &TrackerConfig) -> Result<Vec<Detection>> {
    for d in &frame.detections {
        d.validate()?;
    }
    let pose = match (config.coordinate_frame, &frame.ego_pose) {
        (CoordinateFrame::World, Some(p)) => {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::MalformedDetection("non-finite ego pose".into()));
            }
            Some(p)
        }
        _ => None,
    };
    let mut by_class: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for d in &frame.detections {
        if d.score < config.lifecycle.score_low.get(&d.class) {
            continue;
        }
        let d = match pose {
            Some(p) => transform_detection(d, p),
            None => d.clone(),
        };
        by_class.entry(d.class.clone()).or_default().push(d);
    }
    Ok(by_class
        .into_values()
        .flat_map(|dets| nms(&dets, config.nms_iou))
        .collect())
}

/// Online tracker state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    sequence_id: Option<String>,
    last_frame: Option<u64>,
    tracklets: Vec<Tracklet>,
    ids: IdAllocator,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            sequence_id: None,
            last_frame: None,
            tracklets: Vec::new(),
            ids: IdAllocator::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live tracklets after the most recent frame.
    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracklets
    }

    /// Processes one frame and returns its outputs sorted by track id.
    ///
    /// A frame from a different sequence clears all tracklets; ids keep
    /// increasing across sequences.
    pub fn process_frame(&mut self, frame: &Frame) -> Result<Vec<TrackRecord>> {
        if self.sequence_id.as_deref() != Some(frame.sequence_id.as_str()) {
            self.sequence_id = Some(frame.sequence_id.clone());
            self.last_frame = None;
            self.tracklets.clear();
        }
        let steps = match self.last_frame {
            Some(prev) if frame.frame_index <= prev => {
                return Err(Error::OutOfOrderFrame {
                    sequence_id: frame.sequence_id.clone(),
                    previous: prev,
                    got: frame.frame_index,
                })
            }
            Some(prev) => u32::try_from(frame.frame_index - prev).unwrap_or(u32::MAX),
            None => 0,
        };
        let detections = preprocess(frame, &self.config)?;
        self.last_frame = Some(frame.frame_index);

        let cfg = &self.config;
        for t in &mut self.tracklets {
            t.motion.predict(steps, &cfg.kalman);
        }

        let classes: BTreeSet<String> = self
            .tracklets
            .iter()
            .map(|t| t.class.clone())
            .chain(detections.iter().map(|d| d.class.clone()))
            .collect();
        let mut survivors = Vec::with_capacity(self.tracklets.len());
        let mut newborn = Vec::new();
        let mut pool: Vec<Tracklet> = std::mem::take(&mut self.tracklets);
        for class in classes {
            let (mut mine, rest): (Vec<Tracklet>, Vec<Tracklet>) =
                pool.into_iter().partition(|t| t.class == *class);
            pool = rest;
            let dets: Vec<Detection> = detections.iter().filter(|d| d.class == *class).cloned().collect();
            let params = StepParams {
                metric: cfg.association_metric(&class),
                strategy: cfg.strategy,
                motion: cfg.motion,
                kalman: &cfg.kalman,
                lifecycle: &cfg.lifecycle,
                frame_index: frame.frame_index,
            };
            let candidates = two_stage_step(&mut mine, &dets, &params)?;
            survivors.extend(mine.into_iter().filter(Tracklet::is_alive));
            newborn.extend(birth(&candidates, &params, &mut self.ids));
        }
        survivors.extend(newborn);
        survivors.sort_by_key(|t| t.id);
        self.tracklets = survivors;

        if !frame.is_evaluation_frame {
            return Ok(Vec::new());
        }
        Ok(self
            .tracklets
            .iter()
            .filter_map(|t| {
                let f = t.frame(frame.frame_index)?;
                let score = should_output(t, f, &self.config.lifecycle)?;
                Some(TrackRecord {
                    sequence_id: frame.sequence_id.clone(),
                    frame_index: frame.frame_index,
                    track_id: t.id,
                    class: t.class.clone(),
                    score,
                    bbox: f.bbox,
                    source: f.source,
                })
            })
            .collect())
    }
}

/// Runs one sequence's frames through a fresh tracker.
pub fn process_sequence(frames: &[Frame], config: &TrackerConfig) -> Result<Vec<TrackRecord>> {
    let mut tracker = Tracker::new(config.clone())?;
    let mut out = Vec::new();
    for f in frames {
        out.extend(tracker.process_frame(f)?);
    }
    Ok(out)
}

/// Splits frames by sequence and tracks each independently.
///
/// Sequences run on up to `threads` workers (`None` uses rayon's default).
/// Results are concatenated in sequence-id order, so the output does not
/// depend on scheduling.
pub fn process_sequences(
    frames: &[Frame],
    config: &TrackerConfig,
    threads: Option<usize>,
) -> Result<Vec<TrackRecord>> {
    config.validate()?;
    let mut groups: BTreeMap<&str, Vec<Frame>> = BTreeMap::new();
    for f in frames {
        groups.entry(&f.sequence_id).or_default().push(f.clone());
    }
    let groups: Vec<Vec<Frame>> = groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|f| f.frame_index);
            g
        })
        .collect();
    let run = || -> Result<Vec<Vec<TrackRecord>>> {
        groups
            .par_iter()
            .map(|g| process_sequence(g, config))
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(results.into_iter().flatten().collect())
}
