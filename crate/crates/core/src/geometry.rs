//! Pixel-grid geometry shared by the detector and the evaluator: boxes,
//! free-form pixel regions, binary masks, intersection-over-union and
//! connected-component labeling.
//!
//! Boxes are half-open: `BoundingBox { x, y, w, h }` covers columns
//! `x..x + w` and rows `y..y + h`. Pixels are addressed as `(row, col)`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    /// Leftmost column.
    pub x: usize,
    /// Top row.
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::invalid(format!("degenerate box {w}x{h}")));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// One past the last column.
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    /// One past the last row.
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y && row < self.bottom() && col >= self.x && col < self.right()
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x0 < x1 && y0 < y1).then(|| BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    /// Pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y..self.bottom()).flat_map(move |r| (self.x..self.right()).map(move |c| (r, c)))
    }
}

/// A non-empty set of pixels, stored sorted in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelRegion {
    pixels: Vec<(usize, usize)>,
    extent: BoundingBox,
}

impl PixelRegion {
    /// Builds a region from arbitrary `(row, col)` pixels; duplicates are merged.
    pub fn from_pixels(pixels: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pixels: Vec<_> = pixels.into_iter().collect();
        if pixels.is_empty() {
            return Err(Error::invalid("empty pixel region"));
        }
        pixels.sort_unstable();
        pixels.dedup();
        Ok(Self::from_sorted(pixels))
    }

    fn from_sorted(pixels: Vec<(usize, usize)>) -> Self {
        debug_assert!(!pixels.is_empty());
        let min_row = pixels[0].0;
        let max_row = pixels[pixels.len() - 1].0;
        let (mut min_col, mut max_col) = (usize::MAX, 0);
        for &(_, c) in &pixels {
            min_col = min_col.min(c);
            max_col = max_col.max(c);
        }
        let extent = BoundingBox {
            x: min_col,
            y: min_row,
            w: max_col - min_col + 1,
            h: max_row - min_row + 1,
        };
        PixelRegion { pixels, extent }
    }

    pub fn from_box(b: &BoundingBox) -> Self {
        Self::from_sorted(b.pixels().collect())
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Tight bounding box of the pixel set.
    pub fn extent(&self) -> BoundingBox {
        self.extent
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.extent.contains(row, col) && self.pixels.binary_search(&(row, col)).is_ok()
    }

    fn count_in_box(&self, b: &BoundingBox) -> usize {
        if self.extent.intersect(b).is_none() {
            return 0;
        }
        let start = self.pixels.partition_point(|p| p.0 < b.y);
        self.pixels[start..]
            .iter()
            .take_while(|p| p.0 < b.bottom())
            .filter(|p| p.1 >= b.x && p.1 < b.right())
            .count()
    }

    fn count_common(&self, other: &PixelRegion) -> usize {
        if self.extent.intersect(&other.extent).is_none() {
            return 0;
        }
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.pixels.len() && j < other.pixels.len() {
            match self.pixels[i].cmp(&other.pixels[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Either operand accepted by [`iou`]. Boxes are rasterized to their pixel sets.
#[derive(Debug, Clone, Copy)]
pub enum Shape<'a> {
    Box(BoundingBox),
    Region(&'a PixelRegion),
}

impl From<BoundingBox> for Shape<'_> {
    fn from(b: BoundingBox) -> Self {
        Shape::Box(b)
    }
}

impl From<&BoundingBox> for Shape<'_> {
    fn from(b: &BoundingBox) -> Self {
        Shape::Box(*b)
    }
}

impl<'a> From<&'a PixelRegion> for Shape<'a> {
    fn from(r: &'a PixelRegion) -> Self {
        Shape::Region(r)
    }
}

impl Shape<'_> {
    fn area(&self) -> usize {
        match self {
            Shape::Box(b) => b.area(),
            Shape::Region(r) => r.len(),
        }
    }
}

fn intersection_area(a: &Shape<'_>, b: &Shape<'_>) -> usize {
    match (a, b) {
        (Shape::Box(p), Shape::Box(q)) => p.intersect(q).map_or(0, |i| i.area()),
        (Shape::Box(p), Shape::Region(r)) | (Shape::Region(r), Shape::Box(p)) => r.count_in_box(p),
        (Shape::Region(r), Shape::Region(s)) => r.count_common(s),
    }
}

/// Intersection over union of two pixel sets, in `[0, 1]`.
pub fn iou<'a, 'b>(a: impl Into<Shape<'a>>, b: impl Into<Shape<'b>>) -> Result<f64> {
    let (a, b) = (a.into(), b.into());
    let (area_a, area_b) = (a.area(), b.area());
    if area_a == 0 || area_b == 0 {
        return Err(Error::invalid("iou of an empty operand"));
    }
    let inter = intersection_area(&a, &b);
    let union = area_a + area_b - inter;
    Ok(inter as f64 / union as f64)
}

/// Pixel adjacency used by connected-component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// Edge neighbours only.
    #[default]
    Four,
    /// Edge and corner neighbours.
    Eight,
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::invalid(format!("connectivity must be 4 or 8, got {other:?}"))),
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Connectivity::Four => f.write_str("4"),
            Connectivity::Eight => f.write_str("8"),
        }
    }
}

/// A `width × height` grid of booleans, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(BinaryMask { width, height, bits })
    }

    /// Paints `regions` onto an empty mask.
    pub fn from_regions(width: usize, height: usize, regions: &[PixelRegion]) -> Result<Self> {
        let mut mask = BinaryMask::new(width, height);
        for region in regions {
            if !region.extent().fits_in(width, height) {
                return Err(Error::invalid("region outside mask bounds"));
            }
            for &(r, c) in region.pixels() {
                mask.set(r, c, true);
            }
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new() -> Self {
        DisjointSets { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller label as root so roots follow raster order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Partitions the foreground of `mask` into maximal connected regions.
///
/// Two-pass union-find labeling. Regions are returned sorted by the top-left
/// corner of their extent (min row, then min col), ties broken by the first
/// pixel in raster order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<PixelRegion> {
    let (w, h) = (mask.width, mask.height);
    const NONE: u32 = u32::MAX;
    let mut labels = vec![NONE; w * h];
    let mut sets = DisjointSets::new();

    for r in 0..h {
        for c in 0..w {
            if !mask.bits[r * w + c] {
                continue;
            }
            let mut neighbours = [NONE; 4];
            if c > 0 {
                neighbours[0] = labels[r * w + c - 1];
            }
            if r > 0 {
                neighbours[1] = labels[(r - 1) * w + c];
                if connectivity == Connectivity::Eight {
                    if c > 0 {
                        neighbours[2] = labels[(r - 1) * w + c - 1];
                    }
                    if c + 1 < w {
                        neighbours[3] = labels[(r - 1) * w + c + 1];
                    }
                }
            }
            let mut label = NONE;
            for &n in neighbours.iter().filter(|&&n| n != NONE) {
                if label == NONE {
                    label = n;
                } else {
                    sets.union(label, n);
                }
            }
            labels[r * w + c] = if label == NONE { sets.make() } else { label };
        }
    }

    // Roots are the smallest label in each set, i.e. in raster order of
    // first pixel; compact them to dense indices.
    let mut dense = vec![NONE; sets.parent.len()];
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let l = labels[r * w + c];
            if l == NONE {
                continue;
            }
            let root = sets.find(l) as usize;
            if dense[root] == NONE {
                dense[root] = groups.len() as u32;
                groups.push(Vec::new());
            }
            groups[dense[root] as usize].push((r, c));
        }
    }

    let mut regions: Vec<PixelRegion> = groups.into_iter().map(PixelRegion::from_sorted).collect();
    regions.sort_by_key(|reg| (reg.extent.y, reg.extent.x, reg.pixels[0]));
    regions
}
