//! Per-tracklet motion models.
//!
//! The Kalman filter tracks `[x, y, z, yaw, l, w, h, vx, vy, vz]` under
//! constant-velocity dynamics and observes the first seven components. Time
//! is measured in whole frame steps.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, wrap_angle, BBox3D};

pub const STATE_DIM: usize = 10;
pub const OBS_DIM: usize = 7;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type ObsVector = SVector<f64, OBS_DIM>;
pub type ObsMatrix = SMatrix<f64, OBS_DIM, OBS_DIM>;
type ObsModel = SMatrix<f64, OBS_DIM, STATE_DIM>;

const YAW: usize = 3;
/// Lower bound applied to box dimensions after an update.
const MIN_DIM: f64 = 1e-3;
/// Innovation covariances with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotionModelKind {
    KalmanFilter,
    ConstantVelocity,
    KalmanPredictOnly,
}

impl MotionModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MotionModelKind::KalmanFilter => "kf",
            MotionModelKind::ConstantVelocity => "cv",
            MotionModelKind::KalmanPredictOnly => "kf-pd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kf" => Some(MotionModelKind::KalmanFilter),
            "cv" => Some(MotionModelKind::ConstantVelocity),
            "kf-pd" => Some(MotionModelKind::KalmanPredictOnly),
            _ => None,
        }
    }
}

/// Diagonal noise parameters of the Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanParams {
    pub initial_variance: [f64; STATE_DIM],
    pub process_noise: [f64; STATE_DIM],
    pub observation_noise: [f64; OBS_DIM],
    /// Flip the observed heading by π when it disagrees with the state by
    /// more than π/2.
    pub flip_yaw: bool,
}

impl Default for KalmanParams {
    fn default() -> Self {
        let mut initial_variance = [10.0; STATE_DIM];
        for v in &mut initial_variance[OBS_DIM..] {
            *v = 10_000.0;
        }
        Self {
            initial_variance,
            process_noise: [1.0; STATE_DIM],
            observation_noise: [1.0; OBS_DIM],
            flip_yaw: true,
        }
    }
}

impl KalmanParams {
    fn process(&self) -> StateMatrix {
        StateMatrix::from_diagonal(&StateVector::from(self.process_noise))
    }

    fn observation(&self) -> ObsMatrix {
        ObsMatrix::from_diagonal(&ObsVector::from(self.observation_noise))
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .initial_variance
            .iter()
            .chain(&self.process_noise)
            .chain(&self.observation_noise);
        for v in all {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Config(format!(
                    "kalman noise entries must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.observation_noise.iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("observation noise must be positive".into()));
        }
        Ok(())
    }
}

/// Single-step constant-velocity transition.
fn transition() -> StateMatrix {
    let mut f = StateMatrix::identity();
    for i in 0..3 {
        f[(i, OBS_DIM + i)] = 1.0;
    }
    f
}

fn observation_model() -> ObsModel {
    ObsModel::identity()
}

pub fn box_to_obs(b: &BBox3D) -> ObsVector {
    ObsVector::from([
        b.center_x, b.center_y, b.center_z, b.yaw, b.length, b.width, b.height,
    ])
}

fn symmetrize(p: &StateMatrix) -> StateMatrix {
    (p + p.transpose()) * 0.5
}

/// Mean and covariance of a constant-velocity Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl KalmanState {
    /// Starts a filter at the detected box with zero velocity.
    pub fn init(det: &Detection, params: &KalmanParams) -> Self {
        let obs = box_to_obs(&det.bbox);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<OBS_DIM>(0).copy_from(&obs);
        Self {
            mean,
            covariance: StateMatrix::from_diagonal(&StateVector::from(params.initial_variance)),
        }
    }

    /// Advances `steps` frame steps, one transition at a time.
    pub fn predict(&self, steps: u32, params: &KalmanParams) -> Self {
        let f = transition();
        let q = params.process();
        let mut mean = self.mean;
        let mut cov = self.covariance;
        for _ in 0..steps {
            mean = f * mean;
            cov = symmetrize(&(f * cov * f.transpose() + q));
        }
        mean[YAW] = wrap_angle(mean[YAW]);
        Self {
            mean,
            covariance: cov,
        }
    }

    /// Innovation of `obs` against the predicted observation, yaw wrapped.
    pub fn innovation(&self, obs: &BBox3D) -> ObsVector {
        let z = box_to_obs(obs);
        let mut y = z - observation_model() * self.mean;
        y[YAW] = angle_diff(z[YAW], self.mean[YAW]);
        y
    }

    /// Innovation covariance `H P Hᵀ + R`.
    pub fn innovation_covariance(&self, params: &KalmanParams) -> ObsMatrix {
        let h = observation_model();
        h * self.covariance * h.transpose() + params.observation()
    }

    /// Kalman measurement update with the detection box.
    pub fn update(&self, obs: &BBox3D, params: &KalmanParams) -> Self {
        let mut y = self.innovation(obs);
        if params.flip_yaw && y[YAW].abs() > std::f64::consts::FRAC_PI_2 {
            y[YAW] = wrap_angle(y[YAW] + std::f64::consts::PI);
        }
        let h = observation_model();
        let s = self.innovation_covariance(params);
        let Some(s_inv) = s.cholesky().map(|c| c.inverse()) else {
            return self.clone();
        };
        let gain = self.covariance * h.transpose() * s_inv;
        let mut mean = self.mean + gain * y;
        let i_kh = StateMatrix::identity() - gain * h;
        // Joseph form keeps the posterior symmetric positive definite
        let cov = i_kh * self.covariance * i_kh.transpose()
            + gain * params.observation() * gain.transpose();
        mean[YAW] = wrap_angle(mean[YAW]);
        for i in 4..OBS_DIM {
            mean[i] = mean[i].max(MIN_DIM);
        }
        Self {
            mean,
            covariance: symmetrize(&cov),
        }
    }

    /// Mahalanobis distance between the predicted observation and `obs`.
    pub fn mahalanobis(&self, obs: &BBox3D, params: &KalmanParams) -> Result<f64> {
        mahalanobis_from_parts(&self.innovation(obs), &self.innovation_covariance(params))
    }

    pub fn bbox(&self) -> BBox3D {
        let m = &self.mean;
        BBox3D {
            center_x: m[0],
            center_y: m[1],
            center_z: m[2],
            yaw: wrap_angle(m[YAW]),
            length: m[4].max(MIN_DIM),
            width: m[5].max(MIN_DIM),
            height: m[6].max(MIN_DIM),
        }
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.mean[7], self.mean[8], self.mean[9]]
    }
}

/// `sqrt(yᵀ S⁻¹ y)`, rejecting ill-conditioned `S`.
pub fn mahalanobis_from_parts(innovation: &ObsVector, s: &ObsMatrix) -> Result<f64> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min.is_nan() || min <= 0.0 || max / min > MAX_CONDITION {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularCovariance { condition });
    }
    let chol = sym
        .cholesky()
        .ok_or(Error::SingularCovariance {
            condition: max / min,
        })?;
    let solved = chol.solve(innovation);
    Ok(innovation.dot(&solved).max(0.0).sqrt())
}

/// Translates `last_box` by a BEV velocity (meters per frame) over `steps`.
pub fn cv_predict(last_box: &BBox3D, velocity: [f64; 2], steps: f64) -> BBox3D {
    last_box.translated(velocity[0] * steps, velocity[1] * steps, 0.0)
}

/// The motion state carried by one tracklet.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum MotionModel {
    /// Kalman filter; `predict_only` reports raw detections instead of the
    /// filtered state.
    Kalman {
        state: KalmanState,
        predict_only: bool,
    },
    /// Constant-velocity extrapolation from the last associated box.
    ConstantVelocity {
        last_box: BBox3D,
        velocity: [f64; 2],
        steps_since_update: u32,
    },
}

impl MotionModel {
    pub fn new(kind: MotionModelKind, det: &Detection, params: &KalmanParams) -> Self {
        match kind {
            MotionModelKind::KalmanFilter | MotionModelKind::KalmanPredictOnly => {
                MotionModel::Kalman {
                    state: KalmanState::init(det, params),
                    predict_only: kind == MotionModelKind::KalmanPredictOnly,
                }
            }
            MotionModelKind::ConstantVelocity => MotionModel::ConstantVelocity {
                last_box: det.bbox,
                velocity: det.velocity.unwrap_or([0.0, 0.0]),
                steps_since_update: 0,
            },
        }
    }

    pub fn kind(&self) -> MotionModelKind {
        match self {
            MotionModel::Kalman {
                predict_only: false,
                ..
            } => MotionModelKind::KalmanFilter,
            MotionModel::Kalman {
                predict_only: true, ..
            } => MotionModelKind::KalmanPredictOnly,
            MotionModel::ConstantVelocity { .. } => MotionModelKind::ConstantVelocity,
        }
    }

    /// Advances `steps` frame steps.
    pub fn predict(&mut self, steps: u32, params: &KalmanParams) {
        match self {
            MotionModel::Kalman { state, .. } => *state = state.predict(steps, params),
            MotionModel::ConstantVelocity {
                steps_since_update,
                ..
            } => *steps_since_update += steps,
        }
    }

    /// The box used for association at the current step.
    pub fn predicted_box(&self) -> BBox3D {
        match self {
            MotionModel::Kalman { state, .. } => state.bbox(),
            MotionModel::ConstantVelocity {
                last_box,
                velocity,
                steps_since_update,
            } => cv_predict(last_box, *velocity, *steps_since_update as f64),
        }
    }

    pub fn kalman_state(&self) -> Option<&KalmanState> {
        match self {
            MotionModel::Kalman { state, .. } => Some(state),
            MotionModel::ConstantVelocity { .. } => None,
        }
    }

    /// Incorporates an associated detection and returns the box to report
    /// for this frame.
    pub fn update(&mut self, det: &Detection, params: &KalmanParams) -> BBox3D {
        match self {
            MotionModel::Kalman {
                state,
                predict_only,
            } => {
                *state = state.update(&det.bbox, params);
                if *predict_only {
                    det.bbox
                } else {
                    state.bbox()
                }
            }
            MotionModel::ConstantVelocity {
                last_box,
                velocity,
                steps_since_update,
            } => {
                // without a detector velocity, fall back to the finite
                // difference of the last two associated centers
                *velocity = det.velocity.unwrap_or_else(|| {
                    let steps = (*steps_since_update).max(1) as f64;
                    [
                        (det.bbox.center_x - last_box.center_x) / steps,
                        (det.bbox.center_y - last_box.center_y) / steps,
                    ]
                });
                *last_box = det.bbox;
                *steps_since_update = 0;
                det.bbox
            }
        }
    }
}
