//! Video anomaly detection toolkit.
//!
//! Evaluation of anomaly detectors under track- and region-based criteria
//! (with the frame- and pixel-level criteria for comparison), exemplar
//! nearest-neighbor baseline detectors over foreground-mask and optical-flow
//! features, and a synthetic street-scene generator for testing.
//!
//! With the `parallel` feature (default) per-region, per-frame and
//! per-threshold work runs on the rayon thread pool; results are
//! bit-identical to the sequential build.

pub mod annotations;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod par;
pub mod render;
pub mod synth;
pub mod video;
pub mod volume;

pub use config::Config;
pub use error::{Error, Result};
pub use geometry::{iou, BoundingBox, Connectivity, PixelRegion};
pub use video::{Frame, FrameSequence};
pub use volume::ScoreVolume;
