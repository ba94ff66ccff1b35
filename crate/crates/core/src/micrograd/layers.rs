use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ParamId, ParamSet, Tensor};
use crate::{Error, Result};

/// Default ε of the sparse convolution denominator.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Dense stride-1, same-padded convolution. Kernel `(out, in, k, k)`,
/// bias `(out)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
}

impl ConvLayer {
    /// Register a zero-initialized layer in `params`.
    pub fn new(params: &mut ParamSet, name: &str, in_ch: usize, out_ch: usize, k: usize) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel size {k} is not odd")));
        }
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer {name} has {in_ch} inputs and {out_ch} outputs"
            )));
        }
        let kernel = params.add(format!("{name}.kernel"), Tensor::zeros(&[out_ch, in_ch, k, k]));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_ch]));
        Ok(Self {
            kernel,
            bias,
            in_ch,
            out_ch,
            k,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.in_ch * self.k * self.k
    }

    pub fn num_params(&self) -> usize {
        self.out_ch * self.fan_in() + self.out_ch
    }
}

/// Convolution normalized by the number of observed inputs in its window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseConvLayer {
    pub conv: ConvLayer,
    pub epsilon: f64,
}

impl SparseConvLayer {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be positive")));
        }
        Ok(Self {
            conv: ConvLayer::new(params, name, in_ch, out_ch, k)?,
            epsilon,
        })
    }
}

/// He-normal kernel (`N(0, 2/fan_in)`) drawn from `seed`; bias zeroed.
pub fn init_weights(params: &mut ParamSet, layer: &ConvLayer, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = (2.0 / layer.fan_in() as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    for v in params.get_mut(layer.kernel).data_mut() {
        *v = normal.sample(&mut rng);
    }
    params.get_mut(layer.bias).data_mut().fill(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_scaled() {
        let mut p = ParamSet::new();
        // fan_in 25, 400 outputs -> 10^4 weights
        let l = ConvLayer::new(&mut p, "a", 1, 400, 5).unwrap();
        init_weights(&mut p, &l, 7);
        let first = p.get(l.kernel).data().to_vec();
        init_weights(&mut p, &l, 7);
        assert_eq!(first, p.get(l.kernel).data());
        assert!(p.get(l.bias).data().iter().all(|&b| b == 0.0));

        let n = first.len() as f64;
        assert_eq!(n, 1e4);
        let mean = first.iter().sum::<f64>() / n;
        let var = first.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expect = 2.0 / 25.0;
        assert!((var - expect).abs() < 0.2 * expect, "var {var}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn rejects_even_kernels_and_bad_epsilon() {
        let mut p = ParamSet::new();
        assert!(ConvLayer::new(&mut p, "a", 1, 1, 2).is_err());
        assert!(SparseConvLayer::new(&mut p, "b", 1, 1, 3, 0.0).is_err());
        assert!(SparseConvLayer::new(&mut p, "b", 1, 1, 3, -1.0).is_err());
    }
}
