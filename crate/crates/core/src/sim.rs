//! Synthetic scenes: lane-following objects, noisy detections, score dips,
//! clutter, and duplicate boxes.
//!
//! Every sequence draws from its own ChaCha stream, so a sequence is
//! reproducible from `(seed, index)` alone.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::{iou_3d, wrap_angle, BBox3D};
use crate::io::records::GtRecord;
use crate::tracker::Frame;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub sequences: usize,
    pub frames: u64,
    pub objects: usize,
    pub classes: Vec<String>,
    pub frame_interval: f64,
    /// Every `eval_stride`-th frame is an evaluation frame.
    pub eval_stride: u64,
    pub motion: MotionSpec,
    pub detection: DetectionSpec,
    pub dips: DipSpec,
    pub clutter: ClutterSpec,
    pub duplicates: DuplicateSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSpec {
    /// Speed range in meters per frame.
    pub speed: [f64; 2],
    /// Lateral gap between neighboring lanes, in meters.
    pub lane_spacing: [f64; 2],
    /// Standard deviation of the per-frame heading change, in radians.
    pub turn_noise: f64,
    /// Fraction of lanes driving in the opposite direction.
    pub oncoming: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSpec {
    pub position_noise: f64,
    pub yaw_noise: f64,
    pub size_noise: f64,
    pub score: [f64; 2],
    pub miss_rate: f64,
    pub report_velocity: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DipSpec {
    /// Fraction of objects whose detection score drops for a while.
    pub object_fraction: f64,
    /// Inclusive range of dip lengths in frames.
    pub length: [u64; 2],
    /// Inclusive range of dips per affected object.
    pub count: [u64; 2],
    pub score: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterSpec {
    /// Expected clutter boxes per frame as a fraction of the object count.
    pub rate: f64,
    pub score: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuplicateSpec {
    /// Inclusive range of extra boxes spawned per detection.
    pub count: [u64; 2],
    /// Every duplicate overlaps its source detection by more than this IoU.
    pub min_iou: f64,
    /// Duplicate score as a fraction of the source score.
    pub score_factor: [f64; 2],
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            sequences: 1,
            frames: 100,
            objects: 15,
            classes: vec!["vehicle".into()],
            frame_interval: 0.1,
            eval_stride: 1,
            motion: MotionSpec::default(),
            detection: DetectionSpec::default(),
            dips: DipSpec::default(),
            clutter: ClutterSpec::default(),
            duplicates: DuplicateSpec::default(),
        }
    }
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            speed: [0.3, 1.2],
            lane_spacing: [5.0, 8.0],
            turn_noise: 0.0,
            oncoming: 0.0,
        }
    }
}

impl Default for DetectionSpec {
    fn default() -> Self {
        Self {
            position_noise: 0.1,
            yaw_noise: 0.02,
            size_noise: 0.03,
            score: [0.75, 0.95],
            miss_rate: 0.0,
            report_velocity: false,
        }
    }
}

impl Default for DipSpec {
    fn default() -> Self {
        Self {
            object_fraction: 0.0,
            length: [1, 3],
            count: [1, 1],
            score: [0.15, 0.6],
        }
    }
}

impl Default for ClutterSpec {
    fn default() -> Self {
        Self {
            rate: 0.0,
            score: [0.1, 0.9],
        }
    }
}

impl Default for DuplicateSpec {
    fn default() -> Self {
        Self {
            count: [0, 0],
            min_iou: 0.4,
            score_factor: [0.5, 0.9],
        }
    }
}

/// Detections and ground truth of a generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub frames: Vec<Frame>,
    pub gts: Vec<GtRecord>,
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if r.iter().all(|v| v.is_finite()) && r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::Config(format!("scenario `{name}` must be a finite [low, high] range")))
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("scenario `{name}` must lie in [0, 1]")))
    }
}

/// Class-typical box dimensions `(length, width, height)`.
pub fn class_dimensions(class: &str) -> [f64; 3] {
    match class {
        "pedestrian" => [0.8, 0.8, 1.75],
        "cyclist" => [1.8, 0.7, 1.7],
        _ => [4.5, 1.9, 1.6],
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("scenario needs at least one class".into()));
        }
        if self.eval_stride == 0 {
            return Err(Error::Config("scenario `eval_stride` must be positive".into()));
        }
        if self.frame_interval.is_nan() || self.frame_interval <= 0.0 {
            return Err(Error::Config("scenario `frame_interval` must be positive".into()));
        }
        check_range("motion.speed", self.motion.speed)?;
        check_range("motion.lane_spacing", self.motion.lane_spacing)?;
        check_range("detection.score", self.detection.score)?;
        check_range("dips.score", self.dips.score)?;
        check_range("clutter.score", self.clutter.score)?;
        check_range("duplicates.score_factor", self.duplicates.score_factor)?;
        for (name, r) in [
            ("dips.length", self.dips.length),
            ("dips.count", self.dips.count),
            ("duplicates.count", self.duplicates.count),
        ] {
            if r[0] > r[1] {
                return Err(Error::Config(format!("scenario `{name}` must be a [low, high] range")));
            }
        }
        for (name, r) in [
            ("detection.score", self.detection.score),
            ("dips.score", self.dips.score),
            ("clutter.score", self.clutter.score),
        ] {
            check_unit(name, r[0])?;
            check_unit(name, r[1])?;
        }
        check_unit("motion.oncoming", self.motion.oncoming)?;
        check_unit("detection.miss_rate", self.detection.miss_rate)?;
        check_unit("dips.object_fraction", self.dips.object_fraction)?;
        check_unit("duplicates.min_iou", self.duplicates.min_iou)?;
        for (name, v) in [
            ("motion.turn_noise", self.motion.turn_noise),
            ("detection.position_noise", self.detection.position_noise),
            ("detection.yaw_noise", self.detection.yaw_noise),
            ("detection.size_noise", self.detection.size_noise),
            ("clutter.rate", self.clutter.rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("scenario `{name}` must be non-negative")));
            }
        }
        Ok(())
    }

    /// Generates every sequence.
    pub fn generate(&self, seed: u64) -> SimOutput {
        let mut out = SimOutput {
            frames: Vec::new(),
            gts: Vec::new(),
        };
        for index in 0..self.sequences {
            let seq = self.generate_sequence(seed, index);
            out.frames.extend(seq.frames);
            out.gts.extend(seq.gts);
        }
        out
    }

    /// Generates sequence `index` on its own random stream.
    pub fn generate_sequence(&self, seed: u64, index: usize) -> SimOutput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let sequence_id = format!("seq-{index:04}");
        let objects = self.spawn_objects(&mut rng);
        let dips = self.plan_dips(&mut rng, objects.len());
        let normal = |sigma: f64| Normal::new(0.0, sigma).expect("validated non-negative sigma");
        let pos_noise = normal(self.detection.position_noise);
        let yaw_noise = normal(self.detection.yaw_noise);
        let size_noise = normal(self.detection.size_noise);
        let turn = normal(self.motion.turn_noise);

        let mut states = objects;
        let mut frames = Vec::with_capacity(self.frames as usize);
        let mut gts = Vec::new();
        for f in 0..self.frames {
            let is_eval = f % self.eval_stride == 0;
            let mut detections = Vec::new();
            for (i, obj) in states.iter().enumerate() {
                let truth = obj.bbox();
                if is_eval {
                    gts.push(GtRecord {
                        sequence_id: sequence_id.clone(),
                        frame_index: f,
                        gt_id: i as u64 + 1,
                        class: obj.class.clone(),
                        bbox: truth,
                    });
                }
                if rng.gen::<f64>() < self.detection.miss_rate {
                    continue;
                }
                let score = if dips[i].iter().any(|&(s, e)| (s..e).contains(&f)) {
                    uniform(&mut rng, self.dips.score)
                } else {
                    uniform(&mut rng, self.detection.score)
                };
                let scale = |v: f64, n: f64| (v * (1.0 + n)).max(0.05);
                let bbox = BBox3D {
                    center_x: truth.center_x + pos_noise.sample(&mut rng),
                    center_y: truth.center_y + pos_noise.sample(&mut rng),
                    center_z: truth.center_z + pos_noise.sample(&mut rng) * 0.5,
                    length: scale(truth.length, size_noise.sample(&mut rng)),
                    width: scale(truth.width, size_noise.sample(&mut rng)),
                    height: scale(truth.height, size_noise.sample(&mut rng)),
                    yaw: wrap_angle(truth.yaw + yaw_noise.sample(&mut rng)),
                };
                let mut det = Detection::new(bbox, score, obj.class.clone());
                if self.detection.report_velocity {
                    det = det.with_velocity(obj.velocity[0], obj.velocity[1]);
                }
                let copies = uniform_u64(&mut rng, self.duplicates.count);
                for _ in 0..copies {
                    let dup = self.duplicate(&mut rng, &det);
                    detections.push(dup);
                }
                detections.push(det);
            }
            let expected = self.clutter.rate * states.len() as f64;
            let mut n_clutter = expected.floor() as usize;
            if rng.gen::<f64>() < expected.fract() {
                n_clutter += 1;
            }
            for _ in 0..n_clutter {
                detections.push(self.clutter_box(&mut rng, &states));
            }
            // detectors report in no particular order
            shuffle(&mut rng, &mut detections);
            let mut frame = Frame::new(sequence_id.clone(), f, detections);
            frame.timestamp = f as f64 * self.frame_interval;
            frame.is_evaluation_frame = is_eval;
            frames.push(frame);
            for obj in &mut states {
                obj.advance(turn.sample(&mut rng));
            }
        }
        SimOutput { frames, gts }
    }

    fn spawn_objects(&self, rng: &mut ChaCha8Rng) -> Vec<SimObject> {
        let mut lane_y = 0.0;
        let mut objects = Vec::with_capacity(self.objects);
        for i in 0..self.objects {
            if i > 0 {
                lane_y += uniform(rng, self.motion.lane_spacing);
            }
            let class = self.classes[rng.gen_range(0..self.classes.len())].clone();
            let dims = class_dimensions(&class);
            let speed = uniform(rng, self.motion.speed);
            let heading = if rng.gen::<f64>() < self.motion.oncoming {
                std::f64::consts::PI
            } else {
                0.0
            };
            objects.push(SimObject {
                class,
                position: [rng.gen_range(-20.0..20.0), lane_y, dims[2] / 2.0],
                dims,
                heading,
                speed,
                velocity: [speed * heading.cos(), speed * heading.sin()],
            });
        }
        objects
    }

    fn plan_dips(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<(u64, u64)>> {
        (0..n)
            .map(|_| {
                if rng.gen::<f64>() >= self.dips.object_fraction {
                    return Vec::new();
                }
                let count = uniform_u64(rng, self.dips.count);
                (0..count)
                    .map(|_| {
                        let len = uniform_u64(rng, self.dips.length);
                        // dips start after a short warm-up and end before the last frame
                        let lo = 5.min(self.frames);
                        let hi = self.frames.saturating_sub(len + 1).max(lo + 1);
                        let start = rng.gen_range(lo..hi);
                        (start, start + len)
                    })
                    .collect()
            })
            .collect()
    }

    fn duplicate(&self, rng: &mut ChaCha8Rng, det: &Detection) -> Detection {
        let b = det.bbox;
        let mut jitter = 0.25 * b.width.min(b.length);
        loop {
            let candidate = BBox3D {
                center_x: b.center_x + rng.gen_range(-jitter..=jitter),
                center_y: b.center_y + rng.gen_range(-jitter..=jitter),
                yaw: wrap_angle(b.yaw + rng.gen_range(-0.1..=0.1)),
                ..b
            };
            if iou_3d(&candidate, &b) > self.duplicates.min_iou {
                let factor = uniform(rng, self.duplicates.score_factor);
                return Detection {
                    bbox: candidate,
                    score: det.score * factor,
                    ..det.clone()
                };
            }
            jitter *= 0.8;
        }
    }

    fn clutter_box(&self, rng: &mut ChaCha8Rng, states: &[SimObject]) -> Detection {
        let class = self.classes[rng.gen_range(0..self.classes.len())].clone();
        let dims = class_dimensions(&class);
        let (min_y, max_y) = states
            .iter()
            .fold((0.0f64, 0.0f64), |(lo, hi), o| (lo.min(o.position[1]), hi.max(o.position[1])));
        let (min_x, max_x) = states.iter().fold((-20.0f64, 20.0f64), |(lo, hi), o| {
            (lo.min(o.position[0]), hi.max(o.position[0]))
        });
        let bbox = BBox3D {
            center_x: rng.gen_range(min_x - 10.0..=max_x + 10.0),
            center_y: rng.gen_range(min_y - 10.0..=max_y + 10.0),
            center_z: dims[2] / 2.0,
            length: dims[0],
            width: dims[1],
            height: dims[2],
            yaw: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        };
        Detection::new(bbox, uniform(rng, self.clutter.score), class)
    }
}

#[derive(Debug, Clone)]
struct SimObject {
    class: String,
    position: [f64; 3],
    dims: [f64; 3],
    heading: f64,
    speed: f64,
    velocity: [f64; 2],
}

impl SimObject {
    fn bbox(&self) -> BBox3D {
        BBox3D {
            center_x: self.position[0],
            center_y: self.position[1],
            center_z: self.position[2],
            length: self.dims[0],
            width: self.dims[1],
            height: self.dims[2],
            yaw: wrap_angle(self.heading),
        }
    }

    fn advance(&mut self, turn: f64) {
        self.heading = wrap_angle(self.heading + turn);
        self.velocity = [self.speed * self.heading.cos(), self.speed * self.heading.sin()];
        self.position[0] += self.velocity[0];
        self.position[1] += self.velocity[1];
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

fn uniform_u64(rng: &mut ChaCha8Rng, r: [u64; 2]) -> u64 {
    rng.gen_range(r[0]..=r[1])
}

fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}
