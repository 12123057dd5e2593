use crate::error::{Error, Result};
use crate::geometry::BinaryMask;
use crate::video::Frame;

/// Running mean-intensity background, one value per pixel and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    width: usize,
    height: usize,
    channels: usize,
    mean: Vec<f64>,
    frames_seen: usize,
}

impl BackgroundModel {
    /// Mean of the first `init_frames` frames (all of them if fewer exist).
    pub fn init(frames: &[Frame], init_frames: usize) -> Result<Self> {
        let n = init_frames.min(frames.len());
        if n == 0 {
            return Err(Error::invalid("background model needs at least one frame"));
        }
        if frames.len() < init_frames {
            log::warn!(
                "background init wants {init_frames} frames but only {} are available; using all",
                frames.len()
            );
        }
        let first = &frames[0];
        let mut sum = vec![0.0f64; first.data().len()];
        for frame in &frames[..n] {
            if !frame.same_shape(first) {
                return Err(Error::DimensionMismatch(
                    "background init frames differ in shape".into(),
                ));
            }
            for (s, &v) in sum.iter_mut().zip(frame.data()) {
                *s += v as f64;
            }
        }
        let mean = sum.into_iter().map(|s| s / n as f64).collect();
        Ok(BackgroundModel {
            width: first.width(),
            height: first.height(),
            channels: first.channels(),
            mean,
            frames_seen: n,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    fn check(&self, frame: &Frame) -> Result<()> {
        if frame.width() != self.width || frame.height() != self.height || frame.channels() != self.channels {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{}x{} against a {}x{}x{} background",
                frame.width(),
                frame.height(),
                frame.channels(),
                self.width,
                self.height,
                self.channels
            )));
        }
        Ok(())
    }

    /// `mean ← weight·mean + (1 − weight)·frame`.
    pub fn update(&mut self, frame: &Frame, weight: f64) -> Result<()> {
        self.check(frame)?;
        let rest = 1.0 - weight;
        for (m, &v) in self.mean.iter_mut().zip(frame.data()) {
            *m = weight * *m + rest * v as f64;
        }
        self.frames_seen += 1;
        Ok(())
    }

    /// Foreground where the frame differs from the mean by more than
    /// `theta` in every channel.
    pub fn foreground(&self, frame: &Frame, theta: f64) -> Result<BinaryMask> {
        self.check(frame)?;
        let ch = self.channels;
        let bits = frame
            .data()
            .chunks_exact(ch)
            .zip(self.mean.chunks_exact(ch))
            .map(|(px, mean)| px.iter().zip(mean).all(|(&v, &m)| (v as f64 - m).abs() > theta))
            .collect();
        BinaryMask::from_bits(self.width, self.height, bits)
    }
}
