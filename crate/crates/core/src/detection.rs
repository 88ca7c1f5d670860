use crate::error::{Error, Result};
use crate::geometry::BBox3D;

/// A scored, classed box produced by an upstream detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox3D,
    pub score: f64,
    pub class: String,
    /// Optional BEV velocity in meters per frame step.
    pub velocity: Option<[f64; 2]>,
}

impl Detection {
    pub fn new(bbox: BBox3D, score: f64, class: impl Into<String>) -> Self {
        Self {
            bbox,
            score,
            class: class.into(),
            velocity: None,
        }
    }

    pub fn with_velocity(mut self, vx: f64, vy: f64) -> Self {
        self.velocity = Some([vx, vy]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox
            .validate()
            .map_err(|e| Error::MalformedDetection(e.to_string()))?;
        if !self.score.is_finite() || !(0.0..=1.0).contains(&self.score) {
            return Err(Error::MalformedDetection(format!(
                "score {} outside [0, 1]",
                self.score
            )));
        }
        if let Some(v) = self.velocity {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::MalformedDetection("non-finite velocity".into()));
            }
        }
        Ok(())
    }
}
