use std::path::Path;

use crate::error::{Error, Result};
use crate::par;
use crate::video::Frame;
use crate::volume::read_score_volume;

/// Dense per-pixel displacement in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let i = row * self.width + col;
        (self.dx[i], self.dy[i])
    }
}

/// Candidate displacements `(dy, dx)` ordered by magnitude, then `dy`, then `dx`.
fn candidates(radius: isize) -> Vec<(isize, isize)> {
    let mut c: Vec<(isize, isize)> = (-radius..=radius)
        .flat_map(|dy| (-radius..=radius).map(move |dx| (dy, dx)))
        .collect();
    c.sort_by_key(|&(dy, dx)| (dy * dy + dx * dx, dy, dx));
    c
}

struct Block {
    row: usize,
    col: usize,
    h: usize,
    w: usize,
}

/// Sum of absolute differences, abandoned once it exceeds `bound`.
fn sad(prev: &Frame, next: &Frame, b: &Block, dy: isize, dx: isize, bound: u64) -> Option<u64> {
    let ch = prev.channels();
    let width = prev.width();
    let (p, n) = (prev.data(), next.data());
    let mut total = 0u64;
    for r in 0..b.h {
        let pr = b.row + r;
        let nr = (pr as isize + dy) as usize;
        let p_start = (pr * width + b.col) * ch;
        let n_start = (nr * width + (b.col as isize + dx) as usize) * ch;
        let len = b.w * ch;
        total += p[p_start..p_start + len]
            .iter()
            .zip(&n[n_start..n_start + len])
            .map(|(&a, &c)| a.abs_diff(c) as u64)
            .sum::<u64>();
        if total > bound {
            return None;
        }
    }
    Some(total)
}

/// Exhaustive block-matching flow from `prev` to `next`.
///
/// The frame is tiled into `block × block` tiles (truncated at the right
/// and bottom edges). Each tile gets the integer displacement within
/// `[-radius, radius]²` that minimizes the sum of absolute differences
/// against `next`, considering only displacements that keep the tile inside
/// the frame. Ties go to the smallest magnitude, then the smallest `(dy, dx)`.
/// The tile's displacement is assigned to all its pixels.
pub fn block_matching_flow(prev: &Frame, next: &Frame, block: usize, radius: usize) -> Result<FlowField> {
    if !prev.same_shape(next) {
        return Err(Error::DimensionMismatch("flow frames differ in shape".into()));
    }
    let (width, height) = (prev.width(), prev.height());
    if block == 0 || block > width || block > height {
        return Err(Error::invalid(format!(
            "block size {block} does not fit a {width}x{height} frame"
        )));
    }
    let cands = candidates(radius as isize);
    let block_rows = height.div_ceil(block);
    let block_cols = width.div_ceil(block);

    let row_results: Vec<Vec<(isize, isize)>> = par::map_range(block_rows, |br| {
        (0..block_cols)
            .map(|bc| {
                let b = Block {
                    row: br * block,
                    col: bc * block,
                    h: block.min(height - br * block),
                    w: block.min(width - bc * block),
                };
                let mut best = (0isize, 0isize);
                let mut best_cost = u64::MAX;
                for &(dy, dx) in &cands {
                    let r0 = b.row as isize + dy;
                    let c0 = b.col as isize + dx;
                    if r0 < 0 || c0 < 0 || r0 as usize + b.h > height || c0 as usize + b.w > width {
                        continue;
                    }
                    // strict improvement only: earlier candidates win ties
                    if let Some(cost) = sad(prev, next, &b, dy, dx, best_cost.saturating_sub(1)) {
                        best_cost = cost;
                        best = (dy, dx);
                    }
                    if best_cost == 0 {
                        break;
                    }
                }
                best
            })
            .collect()
    });

    let mut flow = FlowField::zeros(width, height);
    for (br, row) in row_results.iter().enumerate() {
        for (bc, &(dy, dx)) in row.iter().enumerate() {
            let r_end = (br * block + block).min(height);
            let c_end = (bc * block + block).min(width);
            for r in br * block..r_end {
                for c in bc * block..c_end {
                    flow.dx[r * width + c] = dx as f64;
                    flow.dy[r * width + c] = dy as f64;
                }
            }
        }
    }
    Ok(flow)
}

/// Reads externally computed flow stored as `<frame>.dx.vadsv` and
/// `<frame>.dy.vadsv` (one-frame VADSV1 volumes) in `dir`.
///
/// Frame 0 may be omitted and is then zero; every other frame is required.
pub fn load_precomputed_flow(dir: &Path, num_frames: usize, width: usize, height: usize) -> Result<Vec<FlowField>> {
    let load = |t: usize, comp: &str| -> Result<Option<Vec<f64>>> {
        let path = dir.join(format!("{t:06}.{comp}.vadsv"));
        if !path.exists() {
            return Ok(None);
        }
        let v = read_score_volume(&path)?;
        if v.width() != width || v.height() != height || v.num_frames() != 1 {
            return Err(Error::format(
                &path,
                format!("expected a {width}x{height}x1 flow volume"),
            ));
        }
        Ok(Some(v.data().iter().map(|&x| x as f64).collect()))
    };
    (0..num_frames)
        .map(|t| match (load(t, "dx")?, load(t, "dy")?) {
            (Some(dx), Some(dy)) => Ok(FlowField { width, height, dx, dy }),
            (None, None) if t == 0 => Ok(FlowField::zeros(width, height)),
            _ => Err(Error::format(dir, format!("missing precomputed flow for frame {t}"))),
        })
        .collect()
}
