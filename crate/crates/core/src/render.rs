//! Overlay images: detections tinted red, truth boxes outlined in green.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::annotations::{boxes_by_frame, GroundTruthTrack};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::par;
use crate::video::{frame_file_name, Frame, FrameSequence};
use crate::volume::ScoreVolume;

const TINT: [u8; 3] = [255, 0, 0];
const OUTLINE: [u8; 3] = [0, 255, 0];

/// Draws one overlay: pixels with score above `threshold` are blended
/// half-way to red and each truth box gets a one-pixel green border.
pub fn render_overlay(frame: &Frame, scores: &[f32], threshold: f64, truths: &[BoundingBox]) -> Result<RgbImage> {
    let (w, h) = (frame.width(), frame.height());
    if scores.len() != w * h {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for a {w}x{h} frame",
            scores.len()
        )));
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let mut px = if frame.channels() == 1 {
                let v = frame.get(r, c, 0);
                [v, v, v]
            } else {
                [frame.get(r, c, 0), frame.get(r, c, 1), frame.get(r, c, 2)]
            };
            if scores[r * w + c] as f64 > threshold {
                for (p, t) in px.iter_mut().zip(TINT) {
                    *p = ((*p as u16 + t as u16) / 2) as u8;
                }
            }
            img.put_pixel(c as u32, r as u32, Rgb(px));
        }
    }
    for b in truths {
        let (x0, y0, x1, y1) = (b.x, b.y, b.right() - 1, b.bottom() - 1);
        for c in x0..=x1 {
            for r in [y0, y1] {
                if c < w && r < h {
                    img.put_pixel(c as u32, r as u32, Rgb(OUTLINE));
                }
            }
        }
        for r in y0..=y1 {
            for c in [x0, x1] {
                if c < w && r < h {
                    img.put_pixel(c as u32, r as u32, Rgb(OUTLINE));
                }
            }
        }
    }
    Ok(img)
}

/// Writes `<out>/000000.png`, ... for every frame of `seq`.
pub fn write_overlays(
    seq: &FrameSequence,
    volume: &ScoreVolume,
    tracks: &[GroundTruthTrack],
    threshold: f64,
    out: impl AsRef<Path>,
) -> Result<()> {
    let out = out.as_ref();
    if volume.num_frames() != seq.len() || volume.width() != seq.width() || volume.height() != seq.height() {
        return Err(Error::DimensionMismatch(
            "score volume does not match the frames".into(),
        ));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let by_frame = boxes_by_frame(tracks, seq.len());
    let results = par::map_range(seq.len(), |t| {
        let truths: Vec<BoundingBox> = by_frame[t].iter().map(|&(_, b)| b).collect();
        let img = render_overlay(&seq.frames()[t], volume.frame(t), threshold, &truths)?;
        let path = out.join(frame_file_name(t, "png"));
        img.save(&path).map_err(|e| Error::Image { path, source: e })
    });
    results.into_iter().collect()
}
