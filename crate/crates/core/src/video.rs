//! Frame sequences and frame-directory ingest.
//!
//! A frame directory holds one image per frame, named by its zero-padded
//! 0-based index (`000000.png`, `000001.pgm`, ...). PNG and binary PGM/PPM
//! are accepted; other files in the directory are ignored.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Frame rate recorded when none is known.
pub const DEFAULT_FRAME_RATE: f64 = 15.0;

/// One 8-bit frame, interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} bytes for a {width}x{height}x{channels} frame",
                data.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel frame filled with `value`.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Frame {
            width,
            height,
            channels: 1,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Channel `ch` of the pixel at `(row, col)`.
    pub fn get(&self, row: usize, col: usize, ch: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    fn from_image(img: DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Frame {
                    width: w as usize,
                    height: h as usize,
                    channels: 1,
                    data: g.into_raw(),
                }
            }
            DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
                Self::from_image(DynamicImage::ImageLuma8(img.to_luma8()))
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Frame {
                    width: w as usize,
                    height: h as usize,
                    channels: 3,
                    data: rgb.into_raw(),
                }
            }
        }
    }

    pub fn to_image(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, self.data.clone()).expect("frame buffer size"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, self.data.clone()).expect("frame buffer size"))
        }
    }
}

/// An ordered, non-empty list of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    /// Frames per second; metadata only.
    pub frame_rate: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::invalid("no frames found"))?;
        if let Some(i) = frames.iter().position(|f| !f.same_shape(first)) {
            return Err(Error::DimensionMismatch(format!("dimension mismatch at frame {i}")));
        }
        Ok(FrameSequence {
            frames,
            frame_rate: DEFAULT_FRAME_RATE,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

const FRAME_EXTENSIONS: &[&str] = &["png", "pgm", "ppm", "pnm"];

/// Lists `(index, path)` for every numbered frame file in `dir`, sorted by index.
pub fn list_frame_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !ext.is_some_and(|e| FRAME_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok());
        if let Some(index) = index {
            files.push((index, path));
        }
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::format(dir, format!("duplicate frame number {}", w[0].0)));
    }
    Ok(files)
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(Frame::from_image(img))
}

/// Loads every numbered frame in `dir`, in numeric order.
pub fn load_frame_sequence(dir: impl AsRef<Path>) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::format(dir, "not a directory"));
    }
    let files = list_frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::format(dir, "no frames found"));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for (i, (_, path)) in files.iter().enumerate() {
        let frame = load_frame(path)?;
        if let Some(first) = frames.first() {
            if !frame.same_shape(first) {
                return Err(Error::format(dir, format!("dimension mismatch at frame {i}")));
            }
        }
        frames.push(frame);
    }
    FrameSequence::new(frames)
}

/// File name used for frame `index`.
pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("{index:06}.{ext}")
}

/// Writes `seq` as `000000.png`, `000001.png`, ... into `dir` (created if needed).
pub fn write_frame_sequence(seq: &FrameSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i, "png"));
        frame
            .to_image()
            .save(&path)
            .map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}
