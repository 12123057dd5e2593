//! Per-pixel, per-frame anomaly scores and the `VADSV1` file format.
//!
//! ```text
//! VADSV1\n
//! <width> <height> <num_frames>\n
//! width·height·num_frames little-endian f32, frame-major then row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const VOLUME_MAGIC: &[u8] = b"VADSV1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    width: usize,
    height: usize,
    num_frames: usize,
    data: Vec<f32>,
}

impl ScoreVolume {
    /// All-zero volume.
    pub fn zeros(width: usize, height: usize, num_frames: usize) -> Self {
        ScoreVolume {
            width,
            height,
            num_frames,
            data: vec![0.0; width * height * num_frames],
        }
    }

    pub fn from_data(width: usize, height: usize, num_frames: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * num_frames {
            return Err(Error::DimensionMismatch(format!(
                "{} scores for a {width}x{height}x{num_frames} volume",
                data.len()
            )));
        }
        Ok(ScoreVolume {
            width,
            height,
            num_frames,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, row: usize, col: usize) -> f32 {
        self.data[(t * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, t: usize, row: usize, col: usize, value: f32) {
        self.data[(t * self.height + row) * self.width + col] = value;
    }

    pub fn frame_max(&self, t: usize) -> f32 {
        self.frame(t).iter().copied().fold(0.0, f32::max)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    /// Replaces every frame by a constant frame holding its maximum: any
    /// threshold then labels either all or none of a frame's pixels.
    pub fn saturated(&self) -> ScoreVolume {
        let mut out = self.clone();
        for t in 0..self.num_frames {
            let m = self.frame_max(t);
            out.frame_mut(t).fill(m);
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(VOLUME_MAGIC)?;
        writeln!(w, "{} {} {}", self.width, self.height, self.num_frames)?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
        w.flush()
    }

    /// Parses a complete VADSV1 byte buffer.
    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let rest = bytes
            .strip_prefix(VOLUME_MAGIC)
            .ok_or_else(|| "bad magic, expected VADSV1".to_string())?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| "truncated header".to_string())?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|_| "header is not ASCII".to_string())?;
        let dims: Vec<usize> = header
            .split(' ')
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format!("malformed header {header:?}"))?;
        let [width, height, num_frames] = dims[..] else {
            return Err(format!("malformed header {header:?}"));
        };
        if width == 0 || height == 0 || num_frames == 0 {
            return Err("volume dimensions must be positive".to_string());
        }
        let count = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(num_frames))
            .ok_or_else(|| "volume too large".to_string())?;
        let payload = &rest[nl + 1..];
        if payload.len() < count * 4 {
            return Err(format!("truncated payload: {} of {} bytes", payload.len(), count * 4));
        }
        if payload.len() > count * 4 {
            return Err("trailing bytes after payload".to_string());
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(ScoreVolume {
            width,
            height,
            num_frames,
            data,
        })
    }

    pub fn read<R: Read>(mut r: R) -> std::result::Result<Self, String> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| e.to_string())?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_score_volume(volume: &ScoreVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if volume.num_frames == 0 || volume.width == 0 || volume.height == 0 {
        return Err(Error::invalid("cannot write an empty score volume"));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    volume
        .write(std::io::BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

pub fn read_score_volume(path: impl AsRef<Path>) -> Result<ScoreVolume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ScoreVolume::from_bytes(&bytes).map_err(|m| Error::format(path, m))
}
