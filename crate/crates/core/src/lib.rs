//! Tracking-by-detection 3D multi-object tracking.
//!
//! The pipeline runs per frame: detection pre-processing with per-class NMS,
//! motion prediction, two-stage association, and life-cycle management.
//! The [`metrics`] module scores the resulting track streams.

pub mod association;
pub mod cli;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lifecycle;
pub mod metrics;
pub mod motion;
pub mod sim;
pub mod tracker;

pub use detection::Detection;
pub use error::{Error, Result};
pub use geometry::BBox3D;
pub use io::config::{load_config, parse_config, Profile};
pub use io::records::{GtRecord, TrackRecord};
pub use tracker::{process_sequence, process_sequences, Frame, Tracker, TrackerConfig};
