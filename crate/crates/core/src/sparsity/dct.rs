use crate::{Error, Grid, Result};

/// Orthonormal type-II DCT basis of length `n`, row `k` holding
/// `α_k cos(π (2i + 1) k / 2n)`.
fn basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            c[k * n + i] =
                alpha * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf)).cos();
        }
    }
    c
}

/// Separable 2D DCT with cached bases, for repeated transforms of one size.
#[derive(Debug, Clone)]
pub struct Dct2 {
    width: usize,
    height: usize,
    row_basis: Vec<f64>,
    col_basis: Vec<f64>,
}

impl Dct2 {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("DCT of an empty grid".into()));
        }
        Ok(Self {
            width,
            height,
            row_basis: basis(width),
            col_basis: basis(height),
        })
    }

    fn check(&self, g: &Grid) -> Result<()> {
        if g.width != self.width || g.height != self.height {
            return Err(Error::Shape(format!(
                "grid {}x{} for a {}x{} transform",
                g.width, g.height, self.width, self.height
            )));
        }
        Ok(())
    }

    // out = Cv · g · Cuᵀ (forward) or Cvᵀ · g · Cu (inverse)
    fn apply(&self, g: &Grid, inverse: bool) -> Grid {
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0; w * h];
        for r in 0..h {
            let row = &g.data[r * w..(r + 1) * w];
            for k in 0..w {
                let mut acc = 0.0;
                for (i, &x) in row.iter().enumerate() {
                    let b = if inverse {
                        self.row_basis[i * w + k]
                    } else {
                        self.row_basis[k * w + i]
                    };
                    acc += b * x;
                }
                tmp[r * w + k] = acc;
            }
        }
        let mut out = Grid::zeros(w, h);
        for k in 0..h {
            for r in 0..h {
                let b = if inverse {
                    self.col_basis[r * h + k]
                } else {
                    self.col_basis[k * h + r]
                };
                if b == 0.0 {
                    continue;
                }
                let src = &tmp[r * w..(r + 1) * w];
                let dst = &mut out.data[k * w..(k + 1) * w];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += b * s;
                }
            }
        }
        out
    }

    pub fn forward(&self, g: &Grid) -> Result<Grid> {
        self.check(g)?;
        Ok(self.apply(g, false))
    }

    pub fn inverse(&self, g: &Grid) -> Result<Grid> {
        self.check(g)?;
        Ok(self.apply(g, true))
    }
}

/// Orthonormal 2D DCT-II.
pub fn dct2(g: &Grid) -> Result<Grid> {
    Dct2::new(g.width, g.height)?.forward(g)
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2(g: &Grid) -> Result<Grid> {
    Dct2::new(g.width, g.height)?.inverse(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    /// Direct O(N⁴) summation of the orthonormal 2D DCT-II.
    fn dct2_direct(g: &Grid) -> Grid {
        let (w, h) = (g.width, g.height);
        let a = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        Grid::from_fn(w, h, |kv, ku| {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += g.at(y, x)
                        * (PI * (2 * x + 1) as f64 * ku as f64 / (2 * w) as f64).cos()
                        * (PI * (2 * y + 1) as f64 * kv as f64 / (2 * h) as f64).cos();
                }
            }
            a(ku, w) * a(kv, h) * s
        })
    }

    fn random_grid(w: usize, h: usize, seed: u64) -> Grid {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(w, h, |_, _| rng.random_range(-5.0..5.0))
    }

    #[test]
    fn constant_grid_concentrates_in_dc() {
        let (w, h, c) = (6, 4, 2.5);
        let g = Grid::from_fn(w, h, |_, _| c);
        let d = dct2(&g).unwrap();
        let oracle = dct2_direct(&g);
        assert!((d.at(0, 0) - c * ((w * h) as f64).sqrt()).abs() < 1e-12);
        assert!((oracle.at(0, 0) - c * ((w * h) as f64).sqrt()).abs() < 1e-12);
        for (i, v) in d.data.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "coefficient {i} = {v}");
        }
    }

    #[test]
    fn matches_direct_summation() {
        let g = random_grid(7, 5, 1);
        let fast = dct2(&g).unwrap();
        let slow = dct2_direct(&g);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn inverse_and_parseval() {
        for seed in 0..5 {
            let g = random_grid(8, 8, seed);
            let d = dct2(&g).unwrap();
            let back = idct2(&d).unwrap();
            for (a, b) in g.data.iter().zip(&back.data) {
                assert!((a - b).abs() < 1e-10);
            }
            let e0: f64 = g.data.iter().map(|v| v * v).sum();
            let e1: f64 = d.data.iter().map(|v| v * v).sum();
            assert!((e0 - e1).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(dct2(&Grid::zeros(0, 3)).is_err());
    }
}
