use crate::micrograd::Tensor;
use crate::{DepthImage, Error, Grid, Result};

/// Channels produced by [`segmentation_prior`].
pub const PRIOR_CHANNELS: usize = 3;

/// Per-pixel discontinuity strength and its thresholded form.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscontinuityMap {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub binary: Vec<u8>,
    pub threshold: f64,
}

impl DiscontinuityMap {
    fn from_magnitude(width: usize, height: usize, magnitude: Vec<f64>, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::InvalidArgument(format!("threshold {threshold} must be positive")));
        }
        let binary = magnitude.iter().map(|&m| u8::from(m >= threshold)).collect();
        Ok(Self {
            width,
            height,
            magnitude,
            binary,
            threshold,
        })
    }

    pub fn count(&self) -> usize {
        self.binary.iter().filter(|&&b| b == 1).count()
    }
}

fn depth_magnitude(img: &DepthImage) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if img.mask[i] == 0 {
                continue;
            }
            let mut best: f64 = 0.0;
            let mut probe = |j: usize| {
                if img.mask[j] == 1 {
                    best = best.max((img.depth[i] - img.depth[j]).abs());
                }
            };
            if r > 0 {
                probe(i - w);
            }
            if r + 1 < h {
                probe(i + w);
            }
            if c > 0 {
                probe(i - 1);
            }
            if c + 1 < w {
                probe(i + 1);
            }
            out[i] = best;
        }
    }
    out
}

/// Largest absolute depth jump from each valid pixel to its valid
/// 4-neighbours, in meters.
pub fn depth_discontinuity(img: &DepthImage, threshold: f64) -> Result<DiscontinuityMap> {
    DiscontinuityMap::from_magnitude(img.width, img.height, depth_magnitude(img), threshold)
}

fn sobel(gray: &Grid) -> Vec<f64> {
    let mut out = vec![0.0; gray.data.len()];
    for r in 0..gray.height {
        for c in 0..gray.width {
            let px = |dr: isize, dc: isize| gray.at_clamped(r as isize + dr, c as isize + dc);
            let gx = (px(-1, 1) + 2.0 * px(0, 1) + px(1, 1)) - (px(-1, -1) + 2.0 * px(0, -1) + px(1, -1));
            let gy = (px(1, -1) + 2.0 * px(1, 0) + px(1, 1)) - (px(-1, -1) + 2.0 * px(-1, 0) + px(-1, 1));
            out[r * gray.width + c] = gx.hypot(gy);
        }
    }
    out
}

/// Sobel gradient magnitude with replicated borders.
pub fn image_edges(gray: &Grid, threshold: f64) -> Result<DiscontinuityMap> {
    DiscontinuityMap::from_magnitude(gray.width, gray.height, sobel(gray), threshold)
}

/// Hand-crafted segmentation cue, shaped `(1, 3, H, W)`:
/// channel 0 is the depth discontinuity `m/(1+m)`, channel 1 the image edge
/// strength `g/(1+g)` (zeros without an image), channel 2 the validity mask.
pub fn segmentation_prior(img: &DepthImage, gray: Option<&Grid>) -> Result<Tensor> {
    let (w, h) = (img.width, img.height);
    if w * h == 0 {
        return Err(Error::Shape("empty depth image".into()));
    }
    let n = w * h;
    let mut data = vec![0.0; PRIOR_CHANNELS * n];
    for (d, m) in data[..n].iter_mut().zip(depth_magnitude(img)) {
        *d = m / (1.0 + m);
    }
    if let Some(g) = gray {
        if (g.width, g.height) != (w, h) {
            return Err(Error::Shape(format!(
                "image {}x{} for depth {}x{}",
                g.width, g.height, w, h
            )));
        }
        for (d, e) in data[n..2 * n].iter_mut().zip(sobel(g)) {
            *d = e / (1.0 + e);
        }
    }
    for (d, &m) in data[2 * n..].iter_mut().zip(&img.mask) {
        *d = f64::from(m);
    }
    Tensor::from_vec(&[1, PRIOR_CHANNELS, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_planes(w: usize, h: usize, near: f64, far: f64) -> DepthImage {
        let d = (0..w * h)
            .map(|i| if i % w < w / 2 { near } else { far })
            .collect();
        DepthImage::from_depths(w, h, d).unwrap()
    }

    /// Sobel written out as explicit 3×3 weights over a padded copy.
    fn sobel_oracle(g: &Grid) -> Vec<f64> {
        let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
        let (w, h) = (g.width, g.height);
        let mut out = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let (mut sx, mut sy) = (0.0, 0.0);
                for (i, row) in kx.iter().enumerate() {
                    for (j, &k) in row.iter().enumerate() {
                        let rr = (r as isize + i as isize - 1).clamp(0, h as isize - 1) as usize;
                        let cc = (c as isize + j as isize - 1).clamp(0, w as isize - 1) as usize;
                        let v = g.data[rr * w + cc];
                        sx += k * v;
                        // transposed kernel
                        sy += kx[j][i] * v;
                    }
                }
                out.push((sx * sx + sy * sy).sqrt());
            }
        }
        out
    }

    #[test]
    fn constant_depth_has_no_discontinuity() {
        let img = DepthImage::from_depths(6, 4, vec![3.0; 24]).unwrap();
        let m = depth_discontinuity(&img, 0.1).unwrap();
        assert!(m.magnitude.iter().all(|&v| v == 0.0));
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn seam_columns_flagged() {
        let (w, h) = (10, 6);
        let img = two_planes(w, h, 5.0, 8.0);
        let m = depth_discontinuity(&img, 1.0).unwrap();
        for r in 0..h {
            for c in 0..w {
                let expect = u8::from(c == w / 2 - 1 || c == w / 2);
                assert_eq!(m.binary[r * w + c], expect, "({r},{c})");
            }
        }
        assert_eq!(m.magnitude[w / 2], 3.0);
    }

    #[test]
    fn isolated_pixel_is_zero() {
        let mut img = DepthImage::empty(5, 5);
        img.set(2, 2, 4.0);
        let m = depth_discontinuity(&img, 0.5).unwrap();
        assert!(m.magnitude.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_threshold() {
        let img = DepthImage::empty(2, 2);
        assert!(depth_discontinuity(&img, 0.0).is_err());
        assert!(image_edges(&Grid::zeros(2, 2), -1.0).is_err());
    }

    #[test]
    fn constant_image_has_no_edges() {
        let m = image_edges(&Grid::from_fn(7, 5, |_, _| 0.4), 1e-6).unwrap();
        assert!(m.magnitude.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_band_is_two_columns() {
        let (w, h) = (9, 5);
        let g = Grid::from_fn(w, h, |_, c| if c >= 4 { 1.0 } else { 0.0 });
        let m = image_edges(&g, 1e-9).unwrap();
        for r in 0..h {
            for c in 0..w {
                let v = m.magnitude[r * w + c];
                if c == 3 || c == 4 {
                    // 1 + 2 + 1 across the step
                    assert_eq!(v, 4.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn checkerboard_interior_all_edges() {
        // squares of side 2; a 1-pixel board cancels exactly under Sobel
        let n = 12;
        let g = Grid::from_fn(n, n, |r, c| ((r / 2 + c / 2) % 2) as f64);
        let oracle = sobel_oracle(&g);
        let m = image_edges(&g, 0.5).unwrap();
        for (a, b) in m.magnitude.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        for r in 1..n - 1 {
            for c in 1..n - 1 {
                assert_eq!(m.binary[r * n + c], 1, "({r},{c})");
            }
        }
    }

    #[test]
    fn prior_of_empty_depth() {
        let p = segmentation_prior(&DepthImage::empty(4, 3), None).unwrap();
        assert_eq!(p.shape(), &[1, 3, 3, 4]);
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prior_marks_seam() {
        let (w, h) = (8, 4);
        let img = two_planes(w, h, 5.0, 8.0);
        let p = segmentation_prior(&img, None).unwrap();
        let seam = depth_discontinuity(&img, 1.0).unwrap();
        for i in 0..w * h {
            assert_eq!(p.plane(0, 0)[i] > 0.0, seam.binary[i] == 1);
            assert_eq!(p.plane(0, 2)[i], 1.0);
        }
        assert!(p.plane(0, 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prior_rejects_mismatched_image() {
        let img = DepthImage::empty(4, 3);
        assert!(segmentation_prior(&img, Some(&Grid::zeros(3, 3))).is_err());
    }

    proptest! {
        #[test]
        fn prior_in_unit_range(
            d in prop::collection::vec(prop_oneof![Just(0.0), 0.5f64..60.0], 30),
            g in prop::collection::vec(0.0f64..1.0, 30),
        ) {
            let img = DepthImage::from_depths(6, 5, d).unwrap();
            let gray = Grid::from_vec(6, 5, g).unwrap();
            let p = segmentation_prior(&img, Some(&gray)).unwrap();
            prop_assert!(p.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn discontinuity_shift_invariant(
            d in prop::collection::vec(prop_oneof![Just(0.0), 0.5f64..60.0], 30),
            shift in 0.0f64..20.0,
            thr in 0.01f64..5.0,
        ) {
            let img = DepthImage::from_depths(6, 5, d.clone()).unwrap();
            let shifted: Vec<f64> = d.iter().map(|&v| if v > 0.0 { v + shift } else { 0.0 }).collect();
            let img2 = DepthImage::from_depths(6, 5, shifted).unwrap();
            let a = depth_discontinuity(&img, thr).unwrap();
            let b = depth_discontinuity(&img2, thr).unwrap();
            for (x, y) in a.magnitude.iter().zip(&b.magnitude) {
                prop_assert!((x - y).abs() < 1e-9);
                prop_assert!(*x >= 0.0);
            }
            for (m, bit) in a.magnitude.iter().zip(&a.binary) {
                prop_assert_eq!(*bit == 1, *m >= thr);
            }
        }

        #[test]
        fn edges_shift_invariant(
            g in prop::collection::vec(0.0f64..1.0, 30),
            shift in -5.0f64..5.0,
        ) {
            let a = image_edges(&Grid::from_vec(6, 5, g.clone()).unwrap(), 0.1).unwrap();
            let b = image_edges(&Grid::from_vec(6, 5, g.iter().map(|v| v + shift).collect()).unwrap(), 0.1).unwrap();
            for (x, y) in a.magnitude.iter().zip(&b.magnitude) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
