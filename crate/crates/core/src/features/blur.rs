use super::Plane;
use crate::geometry::BinaryMask;

/// Normalized 1-D Gaussian taps for radius `ceil(3·sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn convolve_rows(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for r in 0..height {
        let row = &src[r * width..(r + 1) * width];
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &tap) in kernel.iter().enumerate() {
                let cc = (c as isize + k as isize - radius).clamp(0, width as isize - 1) as usize;
                acc += tap * row[cc];
            }
            out[r * width + c] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for r in 0..height {
        for (k, &tap) in kernel.iter().enumerate() {
            let rr = (r as isize + k as isize - radius).clamp(0, height as isize - 1) as usize;
            let (dst, srow) = (&mut out[r * width..(r + 1) * width], &src[rr * width..(rr + 1) * width]);
            for (d, &s) in dst.iter_mut().zip(srow) {
                *d += tap * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur of a 0/1 mask with clamp-to-edge borders.
///
/// An all-zero mask short-circuits to zeros.
pub fn gaussian_blur(mask: &BinaryMask, sigma: f64) -> Plane {
    let (w, h) = (mask.width(), mask.height());
    if mask.is_empty() {
        return Plane::zeros(w, h);
    }
    let kernel = gaussian_kernel(sigma);
    let src: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let horizontal = convolve_rows(&src, w, h, &kernel);
    Plane {
        width: w,
        height: h,
        data: convolve_cols(&horizontal, w, h, &kernel),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 2-D convolution with the outer-product kernel and clamped reads.
    fn dense_blur(mask: &BinaryMask, sigma: f64) -> Vec<f64> {
        let radius = (3.0 * sigma).ceil() as isize;
        let g = |k: isize| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-radius..=radius).map(g).sum::<f64>().powi(2);
        let (w, h) = (mask.width() as isize, mask.height() as isize);
        let mut out = vec![0.0; (w * h) as usize];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for dr in -radius..=radius {
                    for dc in -radius..=radius {
                        let rr = (r + dr).clamp(0, h - 1) as usize;
                        let cc = (c + dc).clamp(0, w - 1) as usize;
                        if mask.get(rr, cc) {
                            acc += g(dr) * g(dc);
                        }
                    }
                }
                out[(r * w + c) as usize] = acc / norm;
            }
        }
        out
    }

    #[test]
    fn kernel_radius_and_normalization() {
        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kernel(0.4).len(), 5);
    }

    #[test]
    fn constant_masks() {
        let zero = BinaryMask::new(9, 7);
        assert!(gaussian_blur(&zero, 2.0).data.iter().all(|&v| v == 0.0));
        let ones = BinaryMask::from_bits(9, 7, vec![true; 63]).unwrap();
        assert!(gaussian_blur(&ones, 2.0).data.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn impulse_matches_dense_convolution() {
        let mut mask = BinaryMask::new(21, 21);
        mask.set(10, 10, true);
        let got = gaussian_blur(&mask, 2.0);
        let want = dense_blur(&mask, 2.0);
        for (a, b) in got.data.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn border_pattern_matches_dense_convolution() {
        let mut mask = BinaryMask::new(13, 9);
        for &(r, c) in &[(0, 0), (0, 1), (8, 12), (4, 6), (5, 6), (2, 11)] {
            mask.set(r, c, true);
        }
        let got = gaussian_blur(&mask, 1.3);
        let want = dense_blur(&mask, 1.3);
        for (a, b) in got.data.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn interior_mass_preserved() {
        let mut mask = BinaryMask::new(40, 40);
        for r in 17..22 {
            for c in 15..19 {
                mask.set(r, c, true);
            }
        }
        let total: f64 = gaussian_blur(&mask, 2.5).data.iter().sum();
        assert!((total - 20.0).abs() < 1e-6);
    }
}
