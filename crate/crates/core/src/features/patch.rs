use std::path::Path;

use super::{
    block_matching_flow, gaussian_blur, load_precomputed_flow, BackgroundModel, FeatureKind, FlowField, Plane,
};
use crate::config::{Config, FlowSource};
use crate::error::{Error, Result};
use crate::par;
use crate::video::FrameSequence;

/// Where a patch sits in the video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchGeometry {
    pub row: usize,
    pub col: usize,
    pub start_frame: usize,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
}

impl PatchGeometry {
    pub fn feature_len(&self, kind: FeatureKind) -> usize {
        let n = self.height * self.width * self.frames;
        match kind {
            FeatureKind::FgMask => n,
            FeatureKind::Flow => 2 * n,
        }
    }
}

/// Feature vector of one H×W×T video patch.
///
/// Values are computed in `f64` and stored rounded to `f32`, the precision
/// exemplar models are persisted with.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeature {
    pub kind: FeatureKind,
    pub values: Vec<f32>,
    pub geometry: PatchGeometry,
}

/// Per-frame maps for a whole video, from which patch features are cut.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureStack {
    /// Blurred foreground mask per frame.
    FgMask(Vec<Plane>),
    /// Flow into each frame from its predecessor; frame 0 has zero flow.
    Flow(Vec<FlowField>),
}

impl FeatureStack {
    /// Computes the per-frame maps for `seq`.
    ///
    /// The background model restarts for every video. Precomputed flow is
    /// looked up in `source_dir`, the video's frame directory.
    pub fn from_video(seq: &FrameSequence, config: &Config, source_dir: Option<&Path>) -> Result<Self> {
        match config.feature {
            FeatureKind::FgMask => {
                let frames = seq.frames();
                let mut bg = BackgroundModel::init(frames, config.bg_init_frames)?;
                let mut masks = Vec::with_capacity(frames.len());
                for frame in frames {
                    masks.push(bg.foreground(frame, config.fg_threshold)?);
                    bg.update(frame, config.bg_update_weight)?;
                }
                let sigma = config.blur_sigma;
                Ok(FeatureStack::FgMask(par::map_slice(&masks, |m| {
                    gaussian_blur(m, sigma)
                })))
            }
            FeatureKind::Flow => match config.flow_source {
                FlowSource::BlockMatching => {
                    let frames = seq.frames();
                    let mut flows = vec![FlowField::zeros(seq.width(), seq.height())];
                    let rest: Vec<Result<FlowField>> = par::map_range(frames.len() - 1, |t| {
                        block_matching_flow(&frames[t], &frames[t + 1], config.flow_block, config.flow_radius)
                    });
                    for f in rest {
                        flows.push(f?);
                    }
                    Ok(FeatureStack::Flow(flows))
                }
                FlowSource::Precomputed => {
                    let dir =
                        source_dir.ok_or_else(|| Error::invalid("precomputed flow needs the video's directory"))?;
                    Ok(FeatureStack::Flow(load_precomputed_flow(
                        dir,
                        seq.len(),
                        seq.width(),
                        seq.height(),
                    )?))
                }
            },
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureStack::FgMask(_) => FeatureKind::FgMask,
            FeatureStack::Flow(_) => FeatureKind::Flow,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureStack::FgMask(p) => p.len(),
            FeatureStack::Flow(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimensions(&self) -> Option<(usize, usize)> {
        match self {
            FeatureStack::FgMask(p) => p.first().map(|p| (p.width, p.height)),
            FeatureStack::Flow(f) => f.first().map(|f| (f.width, f.height)),
        }
    }

    fn check(&self, g: &PatchGeometry) -> Result<()> {
        let (w, h) = self.dimensions().ok_or_else(|| Error::invalid("empty feature stack"))?;
        if g.height == 0 || g.width == 0 || g.frames == 0 {
            return Err(Error::invalid("patch extent must be positive"));
        }
        if g.row + g.height > h || g.col + g.width > w || g.start_frame + g.frames > self.len() {
            return Err(Error::invalid(format!(
                "patch at ({}, {}) frame {} of {}x{}x{} exceeds the {w}x{h}x{} video",
                g.row,
                g.col,
                g.start_frame,
                g.height,
                g.width,
                g.frames,
                self.len()
            )));
        }
        Ok(())
    }

    /// Writes the feature of patch `g` into `out` (cleared first).
    pub fn extract_into(&self, g: &PatchGeometry, out: &mut Vec<f32>) -> Result<()> {
        self.check(g)?;
        out.clear();
        out.reserve(g.feature_len(self.kind()));
        let window = g.start_frame..g.start_frame + g.frames;
        match self {
            FeatureStack::FgMask(planes) => {
                for p in &planes[window] {
                    for r in g.row..g.row + g.height {
                        let row = &p.data[r * p.width + g.col..r * p.width + g.col + g.width];
                        out.extend(row.iter().map(|&v| v as f32));
                    }
                }
            }
            FeatureStack::Flow(flows) => {
                for f in &flows[window] {
                    for comp in [&f.dx, &f.dy] {
                        for r in g.row..g.row + g.height {
                            let row = &comp[r * f.width + g.col..r * f.width + g.col + g.width];
                            out.extend(row.iter().map(|&v| v as f32));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn extract(&self, g: &PatchGeometry) -> Result<PatchFeature> {
        let mut values = Vec::new();
        self.extract_into(g, &mut values)?;
        Ok(PatchFeature {
            kind: self.kind(),
            values,
            geometry: *g,
        })
    }
}

/// Cuts the feature for patch `g` out of a per-frame stack.
pub fn extract_patch_feature(stack: &FeatureStack, g: &PatchGeometry) -> Result<PatchFeature> {
    stack.extract(g)
}
