//! Exemplar-based nearest-neighbour anomaly detector.
//!
//! Each frame is covered by an overlapping grid of `H × W` regions. Training
//! slides a `T`-frame window over every training video and keeps, per
//! region, each patch whose distance to the nearest stored exemplar is at
//! least `exemplar_threshold`. At test time a patch's anomaly score is the
//! distance to the nearest exemplar of its region; scores are deposited on
//! the window's center frame and averaged per pixel over all patches that
//! cover it.
//!
//! Model file layout (`VADEM1`):
//!
//! ```text
//! VADEM1\n
//! width = <frame width>\n
//! height = <frame height>\n
//! <config key = value lines>
//! \n
//! region <index> <count>\n  followed by count·len little-endian f32, per region
//! ```

use std::io::Write;
use std::path::Path;

use crate::annotations::DetectionRecord;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureStack, Metric, PatchFeature, PatchGeometry};
use crate::geometry::{connected_components, BinaryMask, Connectivity, PixelRegion};
use crate::par;
use crate::video::FrameSequence;
use crate::volume::ScoreVolume;

pub const MODEL_MAGIC: &[u8] = b"VADEM1\n";

/// Anchors along one axis: multiples of `step`, plus a final anchor flush
/// with the far edge when the multiples do not reach it.
fn axis_anchors(extent: usize, size: usize, step: usize) -> Vec<usize> {
    let mut anchors: Vec<usize> = (0..).map(|k| k * step).take_while(|&a| a + size <= extent).collect();
    if let Some(&last) = anchors.last() {
        if last + size < extent {
            anchors.push(extent - size);
        }
    }
    anchors
}

/// Overlapping spatial regions, row-major by anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionGrid {
    pub width: usize,
    pub height: usize,
    pub patch_height: usize,
    pub patch_width: usize,
    pub step: usize,
    /// Top-left `(row, col)` of every region.
    pub anchors: Vec<(usize, usize)>,
}

impl RegionGrid {
    pub fn new(width: usize, height: usize, patch_height: usize, patch_width: usize, step: usize) -> Result<Self> {
        if step == 0 || patch_height == 0 || patch_width == 0 {
            return Err(Error::invalid("patch size and step must be positive"));
        }
        if patch_height > height || patch_width > width {
            return Err(Error::invalid(format!(
                "{patch_height}x{patch_width} patch does not fit a {width}x{height} frame"
            )));
        }
        let rows = axis_anchors(height, patch_height, step);
        let cols = axis_anchors(width, patch_width, step);
        let anchors = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
        Ok(RegionGrid {
            width,
            height,
            patch_height,
            patch_width,
            step,
            anchors,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn patch(&self, region: usize, start_frame: usize, frames: usize) -> PatchGeometry {
        let (row, col) = self.anchors[region];
        PatchGeometry {
            row,
            col,
            start_frame,
            height: self.patch_height,
            width: self.patch_width,
            frames,
        }
    }
}

/// Builds the region grid for a frame size.
pub fn build_grid(
    width: usize,
    height: usize,
    patch_height: usize,
    patch_width: usize,
    step: usize,
) -> Result<RegionGrid> {
    RegionGrid::new(width, height, patch_height, patch_width, step)
}

/// Exemplars of one region, stored back to back.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionExemplars {
    values: Vec<f32>,
    feature_len: usize,
}

impl RegionExemplars {
    fn new(feature_len: usize) -> Self {
        RegionExemplars {
            values: Vec::new(),
            feature_len,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.feature_len
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.feature_len)
    }

    pub fn get(&self, i: usize) -> &[f32] {
        &self.values[i * self.feature_len..(i + 1) * self.feature_len]
    }

    fn push(&mut self, feature: &[f32]) {
        self.values.extend_from_slice(feature);
    }

    fn nearest(&self, metric: &Metric, feature: &[f32]) -> Option<f64> {
        metric.nearest(feature, self.iter()).map(|(_, d)| d)
    }
}

/// Normal-activity model: a set of exemplar features per grid region.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarModel {
    /// Training configuration with the exemplar threshold resolved.
    pub config: Config,
    pub grid: RegionGrid,
    regions: Vec<RegionExemplars>,
}

impl ExemplarModel {
    pub fn kind(&self) -> FeatureKind {
        self.config.feature
    }

    pub fn metric(&self) -> Metric {
        Metric::for_kind(self.config.feature, self.config.l1_epsilon)
    }

    pub fn feature_len(&self) -> usize {
        let n = self.config.patch_height * self.config.patch_width * self.config.patch_frames;
        match self.config.feature {
            FeatureKind::FgMask => n,
            FeatureKind::Flow => 2 * n,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.config.effective_exemplar_threshold()
    }

    pub fn regions(&self) -> &[RegionExemplars] {
        &self.regions
    }

    pub fn exemplar_count(&self) -> usize {
        self.regions.iter().map(|r| r.len()).sum()
    }

    /// Distance from `values` to the nearest exemplar of `region`.
    pub fn nearest_distance(&self, region: usize, values: &[f32]) -> Result<f64> {
        let exemplars = self
            .regions
            .get(region)
            .ok_or_else(|| Error::invalid(format!("no region {region} in a {}-region model", self.regions.len())))?;
        if values.len() != self.feature_len() {
            return Err(Error::invalid(format!(
                "feature length {} does not match the model's {}",
                values.len(),
                self.feature_len()
            )));
        }
        exemplars
            .nearest(&self.metric(), values)
            .ok_or_else(|| Error::invalid(format!("region {region} has no exemplars")))
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        writeln!(w, "width = {}", self.grid.width)?;
        writeln!(w, "height = {}", self.grid.height)?;
        w.write_all(self.config.to_text().as_bytes())?;
        w.write_all(b"\n")?;
        for (i, region) in self.regions.iter().enumerate() {
            writeln!(w, "region {i} {}", region.len())?;
            let mut bytes = Vec::with_capacity(region.values.len() * 4);
            for v in &region.values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        w.flush()
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut rest = bytes
            .strip_prefix(MODEL_MAGIC)
            .ok_or_else(|| "bad magic, expected VADEM1".to_string())?;
        let next_line = |rest: &mut &[u8]| -> std::result::Result<String, String> {
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| "truncated model header".to_string())?;
            let line = std::str::from_utf8(&rest[..nl])
                .map_err(|_| "model header is not text".to_string())?
                .to_string();
            *rest = &rest[nl + 1..];
            Ok(line)
        };
        let mut dims = [0usize; 2];
        for (slot, key) in dims.iter_mut().zip(["width", "height"]) {
            let line = next_line(&mut rest)?;
            let value = line
                .strip_prefix(key)
                .and_then(|l| l.trim_start().strip_prefix('='))
                .ok_or_else(|| format!("expected {key} line, got {line:?}"))?;
            *slot = value.trim().parse().map_err(|_| format!("bad {key} {value:?}"))?;
        }
        let mut config_text = String::new();
        loop {
            let line = next_line(&mut rest)?;
            if line.is_empty() {
                break;
            }
            config_text.push_str(&line);
            config_text.push('\n');
        }
        let config = Config::parse(&config_text).map_err(|e| e.to_string())?;
        let grid = RegionGrid::new(dims[0], dims[1], config.patch_height, config.patch_width, config.step)
            .map_err(|e| e.to_string())?;
        let mut model = ExemplarModel {
            config,
            regions: Vec::new(),
            grid,
        };
        let len = model.feature_len();
        for i in 0..model.grid.len() {
            let line = next_line(&mut rest)?;
            let parts: Vec<&str> = line.split(' ').collect();
            let (index, count) = match parts[..] {
                ["region", idx, count] => (
                    idx.parse::<usize>().map_err(|_| format!("bad region line {line:?}"))?,
                    count
                        .parse::<usize>()
                        .map_err(|_| format!("bad region line {line:?}"))?,
                ),
                _ => return Err(format!("expected region line, got {line:?}")),
            };
            if index != i {
                return Err(format!("region {index} out of order, expected {i}"));
            }
            let n = count * len * 4;
            if rest.len() < n {
                return Err(format!("truncated exemplars for region {i}"));
            }
            let mut region = RegionExemplars::new(len);
            region.values = rest[..n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            rest = &rest[n..];
            model.regions.push(region);
        }
        if !rest.is_empty() {
            return Err("trailing bytes after the last region".to_string());
        }
        Ok(model)
    }
}

pub fn write_model(model: &ExemplarModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    model
        .write(std::io::BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ExemplarModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ExemplarModel::from_bytes(&bytes).map_err(|m| Error::format(path, m))
}

/// Trains on `training` in order, computing features from the frames alone.
pub fn build_exemplars(training: &[FrameSequence], config: &Config) -> Result<ExemplarModel> {
    build_exemplars_from_stacks(
        training.iter().map(|v| FeatureStack::from_video(v, config, None)),
        config,
    )
}

/// Trains from per-video feature stacks, consumed one video at a time.
pub fn build_exemplars_from_stacks<I>(stacks: I, config: &Config) -> Result<ExemplarModel>
where
    I: IntoIterator<Item = Result<FeatureStack>>,
{
    config.validate()?;
    let mut resolved = config.clone();
    resolved.exemplar_threshold = Some(config.effective_exemplar_threshold());
    let threshold = resolved.effective_exemplar_threshold();
    let metric = Metric::for_kind(config.feature, config.l1_epsilon);
    let frames = config.patch_frames;

    let mut model: Option<ExemplarModel> = None;
    for (vi, stack) in stacks.into_iter().enumerate() {
        let stack = stack?;
        if stack.kind() != config.feature {
            return Err(Error::invalid("feature stack kind differs from the configured feature"));
        }
        let (w, h) = stack
            .dimensions()
            .ok_or_else(|| Error::invalid(format!("training video {vi} is empty")))?;
        if stack.len() < frames {
            return Err(Error::invalid(format!(
                "training video {vi} has {} frames, fewer than T = {frames}",
                stack.len()
            )));
        }
        let model = match &mut model {
            Some(m) => {
                if (m.grid.width, m.grid.height) != (w, h) {
                    return Err(Error::DimensionMismatch(format!(
                        "training video {vi} is {w}x{h}, expected {}x{}",
                        m.grid.width, m.grid.height
                    )));
                }
                m
            }
            None => {
                let grid = RegionGrid::new(w, h, config.patch_height, config.patch_width, config.step)?;
                let mut m = ExemplarModel {
                    config: resolved.clone(),
                    regions: Vec::new(),
                    grid,
                };
                let len = m.feature_len();
                m.regions = vec![RegionExemplars::new(len); m.grid.len()];
                model.insert(m)
            }
        };

        let grid = &model.grid;
        let windows = stack.len() - frames + 1;
        let results: Vec<Result<()>> = {
            let mut outcomes: Vec<Result<()>> = (0..model.regions.len()).map(|_| Ok(())).collect();
            let mut paired: Vec<(&mut RegionExemplars, &mut Result<()>)> =
                model.regions.iter_mut().zip(outcomes.iter_mut()).collect();
            par::for_each_mut(&mut paired, |ri, (region, outcome)| {
                let mut buf = Vec::new();
                for t in 0..windows {
                    if let Err(e) = stack.extract_into(&grid.patch(ri, t, frames), &mut buf) {
                        **outcome = Err(e);
                        return;
                    }
                    let keep = match region.nearest(&metric, &buf) {
                        None => true,
                        Some(d) => d >= threshold,
                    };
                    if keep {
                        region.push(&buf);
                    }
                }
            });
            outcomes
        };
        results.into_iter().collect::<Result<()>>()?;
    }
    model.ok_or_else(|| Error::invalid("no training videos"))
}

/// Anomaly score of one patch feature: distance to its region's nearest exemplar.
pub fn score_patch(model: &ExemplarModel, region: usize, feature: &PatchFeature) -> Result<f64> {
    if feature.kind != model.kind() {
        return Err(Error::invalid(format!(
            "{} feature scored against a {} model",
            feature.kind,
            model.kind()
        )));
    }
    model.nearest_distance(region, &feature.values)
}

/// Center frame of the window starting at `start`.
pub fn center_frame(start: usize, frames: usize) -> usize {
    start + (frames - 1) / 2
}

/// Scores every patch of `seq` and assembles the per-pixel score volume.
pub fn detect(model: &ExemplarModel, seq: &FrameSequence) -> Result<ScoreVolume> {
    detect_with_source(model, seq, None)
}

/// Like [`detect`], with the frame directory for precomputed flow.
pub fn detect_with_source(
    model: &ExemplarModel,
    seq: &FrameSequence,
    source_dir: Option<&Path>,
) -> Result<ScoreVolume> {
    if (seq.width(), seq.height()) != (model.grid.width, model.grid.height) {
        return Err(Error::DimensionMismatch(format!(
            "test video is {}x{}, model expects {}x{}",
            seq.width(),
            seq.height(),
            model.grid.width,
            model.grid.height
        )));
    }
    if seq.len() < model.config.patch_frames {
        return Err(Error::invalid(format!(
            "test video has {} frames, fewer than T = {}",
            seq.len(),
            model.config.patch_frames
        )));
    }
    let stack = FeatureStack::from_video(seq, &model.config, source_dir)?;
    detect_stack(model, &stack)
}

/// Patch scores per region and window start.
pub fn patch_scores(model: &ExemplarModel, stack: &FeatureStack) -> Result<Vec<Vec<f64>>> {
    let frames = model.config.patch_frames;
    if stack.kind() != model.kind() {
        return Err(Error::invalid("feature stack kind differs from the model"));
    }
    if stack.len() < frames {
        return Err(Error::invalid("video shorter than the patch extent"));
    }
    let windows = stack.len() - frames + 1;
    let metric = model.metric();
    let per_region: Vec<Result<Vec<f64>>> = par::map_range(model.grid.len(), |ri| {
        let mut buf = Vec::new();
        let region = &model.regions[ri];
        (0..windows)
            .map(|t| {
                stack.extract_into(&model.grid.patch(ri, t, frames), &mut buf)?;
                region
                    .nearest(&metric, &buf)
                    .ok_or_else(|| Error::invalid(format!("region {ri} has no exemplars")))
            })
            .collect()
    });
    per_region.into_iter().collect()
}

/// Assembles a score volume from per-region window scores: each score is
/// deposited over its region's footprint on the window's center frame, and
/// each pixel takes the mean of its deposits. Deposits are summed in grid
/// order, so the result does not depend on scheduling.
pub fn assemble_volume(grid: &RegionGrid, frames: usize, num_frames: usize, scores: &[Vec<f64>]) -> ScoreVolume {
    let (w, h) = (grid.width, grid.height);
    let mut coverage = vec![0u32; w * h];
    for &(r0, c0) in &grid.anchors {
        for r in r0..r0 + grid.patch_height {
            for c in &mut coverage[r * w + c0..r * w + c0 + grid.patch_width] {
                *c += 1;
            }
        }
    }
    let windows = num_frames + 1 - frames;
    let offset = center_frame(0, frames);
    let frame_data: Vec<Vec<f32>> = par::map_range(num_frames, |f| {
        let t = match f.checked_sub(offset) {
            Some(t) if t < windows => t,
            _ => return vec![0.0; w * h],
        };
        let mut sum = vec![0.0f64; w * h];
        for (&(r0, c0), region_scores) in grid.anchors.iter().zip(scores) {
            let s = region_scores[t];
            for r in r0..r0 + grid.patch_height {
                for v in &mut sum[r * w + c0..r * w + c0 + grid.patch_width] {
                    *v += s;
                }
            }
        }
        sum.iter()
            .zip(&coverage)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { (s / n as f64) as f32 })
            .collect()
    });
    let data = frame_data.into_iter().flatten().collect();
    ScoreVolume::from_data(w, h, num_frames, data).expect("assembled volume size")
}

pub fn detect_stack(model: &ExemplarModel, stack: &FeatureStack) -> Result<ScoreVolume> {
    let scores = patch_scores(model, stack)?;
    Ok(assemble_volume(
        &model.grid,
        model.config.patch_frames,
        stack.len(),
        &scores,
    ))
}

/// Connected regions of pixels scoring strictly above `threshold` in frame `t`.
pub fn frame_detections(
    volume: &ScoreVolume,
    t: usize,
    threshold: f64,
    connectivity: Connectivity,
) -> Vec<PixelRegion> {
    let scores = volume.frame(t);
    if scores.iter().all(|&s| (s as f64) <= threshold) {
        return Vec::new();
    }
    let bits = scores.iter().map(|&s| s as f64 > threshold).collect();
    let mask = BinaryMask::from_bits(volume.width(), volume.height(), bits).expect("frame size");
    connected_components(&mask, connectivity)
}

/// Per-frame detected regions at `threshold`.
pub fn extract_detections(volume: &ScoreVolume, threshold: f64, connectivity: Connectivity) -> Vec<Vec<PixelRegion>> {
    par::map_range(volume.num_frames(), |t| {
        frame_detections(volume, t, threshold, connectivity)
    })
}

/// Detected regions at `threshold` as records, scored by their peak value.
pub fn detection_records(volume: &ScoreVolume, threshold: f64, connectivity: Connectivity) -> Vec<DetectionRecord> {
    extract_detections(volume, threshold, connectivity)
        .into_iter()
        .enumerate()
        .flat_map(|(t, regions)| {
            regions.into_iter().map(move |region| {
                let score = region
                    .pixels()
                    .iter()
                    .map(|&(r, c)| volume.get(t, r, c))
                    .fold(0.0f32, f32::max) as f64;
                DetectionRecord {
                    frame_index: t,
                    track_id: None,
                    region,
                    score,
                }
            })
        })
        .collect()
}
