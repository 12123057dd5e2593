//! Per-patch feature vectors: blurred foreground masks or optical flow,
//! plus the distance functions used to compare them.

mod background;
mod blur;
mod distance;
mod flow;
mod patch;

use std::fmt;
use std::str::FromStr;

pub use background::BackgroundModel;
pub use blur::{gaussian_blur, gaussian_kernel};
pub use distance::{dist_l2, dist_norm_l1, l2_distance, normalized_l1_distance, Metric};
pub use flow::{block_matching_flow, load_precomputed_flow, FlowField};
pub use patch::{extract_patch_feature, FeatureStack, PatchFeature, PatchGeometry};

use crate::error::Error;

/// Which feature a detector is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FeatureKind {
    /// Concatenated Gaussian-blurred foreground masks, compared with L2.
    #[default]
    FgMask,
    /// Concatenated per-frame flow (dx block then dy block), compared with
    /// the normalized L1 distance.
    Flow,
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "fg" | "fg-mask" => Ok(FeatureKind::FgMask),
            "flow" => Ok(FeatureKind::Flow),
            other => Err(Error::Config(format!("feature must be fg or flow, got {other:?}"))),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::FgMask => "fg",
            FeatureKind::Flow => "flow",
        })
    }
}

/// A real-valued single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}
