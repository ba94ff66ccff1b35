//! Tape of tensor operations with reverse-mode differentiation.

use super::conv::{self, ConvDims};
use super::layers::{ConvLayer, SparseConvLayer};
use super::{ParamId, ParamSet, Tensor};
use crate::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// How the loss sums its per-pixel terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Sum,
    /// Divide the sum by the number of valid ground-truth pixels.
    Mean,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    SparseConv {
        input: Var,
        kernel: Var,
        bias: Var,
        /// observation mask, `N·H·W`
        mask: Vec<f64>,
        /// `Σ o + ε` per output pixel, `N·H·W`
        denom: Vec<f64>,
    },
    Relu(Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Loss {
        pred: Var,
        /// `∂L/∂pred`, computed during the forward pass
        dpred: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// A single forward computation. Build it with the op methods, then call
/// [`Graph::backward`] on a scalar loss to accumulate parameter gradients.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Constant data; gradients do not flow into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let p = params.get(id);
        let value = Tensor::from_vec(p.shape(), p.data().to_vec()).expect("parameter shape");
        self.push(value, Op::Param(id), true)
    }

    fn conv_dims(&self, input: Var, kernel: Var) -> Result<(usize, ConvDims)> {
        let (n, c, h, w) = self.value(input).nchw()?;
        let ks = self.value(kernel).shape();
        let &[o, ci, k, k2] = ks else {
            return Err(Error::Shape(format!("kernel shape {ks:?}")));
        };
        if ci != c || k != k2 {
            return Err(Error::Shape(format!(
                "kernel {ks:?} does not accept {c} input channels"
            )));
        }
        Ok((
            n,
            ConvDims {
                in_ch: c,
                out_ch: o,
                k,
                h,
                w,
            },
        ))
    }

    /// Same-padded stride-1 cross-correlation plus bias.
    pub fn conv2d(&mut self, input: Var, layer: &ConvLayer, params: &ParamSet) -> Result<Var> {
        let kernel = self.param(params, layer.kernel);
        let bias = self.param(params, layer.bias);
        let (n, d) = self.conv_dims(input, kernel)?;
        let mut out = Tensor::zeros(&[n, d.out_ch, d.h, d.w]);
        {
            let x = self.value(input).data();
            let kd = self.value(kernel).data();
            let bd = self.value(bias).data();
            let (isz, osz) = (d.in_ch * d.h * d.w, d.out_ch * d.h * d.w);
            for s in 0..n {
                conv::forward(
                    &x[s * isz..(s + 1) * isz],
                    kd,
                    Some(bd),
                    &d,
                    &mut out.data_mut()[s * osz..(s + 1) * osz],
                );
            }
        }
        Ok(self.push(
            out,
            Op::Conv {
                input,
                kernel,
                bias,
            },
            true,
        ))
    }

    /// Sparsity-invariant convolution:
    /// `f(x, o) = Σ o·x·w / (Σ o + ε) + b`, with the observation count taken
    /// over the kernel window. Returns the features and the propagated mask
    /// (max-pool of `o` over the window).
    pub fn sparse_conv2d(
        &mut self,
        input: Var,
        mask: &Tensor,
        layer: &SparseConvLayer,
        params: &ParamSet,
    ) -> Result<(Var, Tensor)> {
        let kernel = self.param(params, layer.conv.kernel);
        let bias = self.param(params, layer.conv.bias);
        let (n, d) = self.conv_dims(input, kernel)?;
        let (mn, mc, mh, mw) = mask.nchw()?;
        if (mn, mc, mh, mw) != (n, 1, d.h, d.w) {
            return Err(Error::Shape(format!(
                "mask {:?} for input {:?}",
                mask.shape(),
                self.value(input).shape()
            )));
        }
        let hw = d.h * d.w;
        let (isz, osz) = (d.in_ch * hw, d.out_ch * hw);
        let mut out = Tensor::zeros(&[n, d.out_ch, d.h, d.w]);
        let mut denom = Vec::with_capacity(n * hw);
        let mut new_mask = Tensor::zeros(&[n, 1, d.h, d.w]);
        {
            let x = self.value(input).data();
            let kd = self.value(kernel).data();
            let bd = self.value(bias).data();
            let mut masked = vec![0.0; isz];
            for s in 0..n {
                let m = &mask.data()[s * hw..(s + 1) * hw];
                for c in 0..d.in_ch {
                    let src = &x[s * isz + c * hw..s * isz + (c + 1) * hw];
                    for ((dst, xv), mv) in masked[c * hw..(c + 1) * hw].iter_mut().zip(src).zip(m) {
                        *dst = xv * mv;
                    }
                }
                let o = &mut out.data_mut()[s * osz..(s + 1) * osz];
                conv::forward(&masked, kd, None, &d, o);
                let dn: Vec<f64> = conv::box_sum(m, d.h, d.w, d.k)
                    .into_iter()
                    .map(|v| v + layer.epsilon)
                    .collect();
                for (oc, &b) in bd.iter().enumerate() {
                    for (v, dv) in o[oc * hw..(oc + 1) * hw].iter_mut().zip(&dn) {
                        *v = *v / dv + b;
                    }
                }
                denom.extend_from_slice(&dn);
                new_mask.data_mut()[s * hw..(s + 1) * hw]
                    .copy_from_slice(&conv::box_max(m, d.h, d.w, d.k));
            }
        }
        let var = self.push(
            out,
            Op::SparseConv {
                input,
                kernel,
                bias,
                mask: mask.data().to_vec(),
                denom,
            },
            true,
        );
        Ok((var, new_mask))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let data = v.data().iter().map(|&x| x.max(0.0)).collect();
        let out = Tensor::from_vec(v.shape(), data).unwrap();
        let tracked = self.is_tracked(input);
        self.push(out, Op::Relu(input), tracked)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let v = self.value(input);
        let data = v.data().iter().map(|&x| x * factor).collect();
        let out = Tensor::from_vec(v.shape(), data).unwrap();
        let tracked = self.is_tracked(input);
        self.push(out, Op::Scale(input, factor), tracked)
    }

    /// Concatenate NCHW tensors along the channel axis.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = self
            .value(*inputs.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?)
            .nchw()?;
        let mut channels = 0;
        for &v in inputs {
            let (n, c, h, w) = self.value(v).nchw()?;
            if (n, h, w) != (first.0, first.2, first.3) {
                return Err(Error::Shape(format!(
                    "concat of {:?} with {:?}",
                    self.value(v).shape(),
                    self.value(inputs[0]).shape()
                )));
            }
            channels += c;
        }
        let (n, _, h, w) = first;
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, channels, h, w]);
        for s in 0..n {
            let mut off = s * channels * hw;
            for &v in inputs {
                let t = self.value(v);
                let c = t.shape()[1];
                let src = &t.data()[s * c * hw..(s + 1) * c * hw];
                out.data_mut()[off..off + c * hw].copy_from_slice(src);
                off += c * hw;
            }
        }
        let tracked = inputs.iter().any(|&v| self.is_tracked(v));
        Ok(self.push(out, Op::Concat(inputs.to_vec()), tracked))
    }

    /// `Σ_{gt_mask = 1} (d² + λ|d|)` with `d = gt − pred`, optionally divided
    /// by the number of valid pixels.
    pub fn loss_l2_l1(
        &mut self,
        pred: Var,
        gt: &Tensor,
        gt_mask: &Tensor,
        lambda: f64,
        reduction: Reduction,
    ) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != gt.shape() || p.shape() != gt_mask.shape() {
            return Err(Error::Shape(format!(
                "loss of pred {:?}, gt {:?}, mask {:?}",
                p.shape(),
                gt.shape(),
                gt_mask.shape()
            )));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda {lambda} < 0")));
        }
        let valid = gt_mask.data().iter().filter(|&&m| m != 0.0).count();
        let norm = match reduction {
            Reduction::Sum => 1.0,
            Reduction::Mean => 1.0 / valid.max(1) as f64,
        };
        let mut total = 0.0;
        let mut dpred = vec![0.0; p.len()];
        for i in 0..p.len() {
            if gt_mask.data()[i] == 0.0 {
                continue;
            }
            let d = gt.data()[i] - p.data()[i];
            total += d * d + lambda * d.abs();
            let sign = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            dpred[i] = -(2.0 * d + lambda * sign) * norm;
        }
        let tracked = self.is_tracked(pred);
        Ok(self.push(Tensor::scalar(total * norm), Op::Loss { pred, dpred }, tracked))
    }

    /// Reverse-mode pass from a scalar `loss`, adding `∂loss/∂param` into
    /// every reached parameter's gradient accumulator.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar {:?}",
                root.value.shape()
            )));
        }
        if !root.tracked {
            return Err(Error::Domain("loss does not depend on any parameter".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let acc = params
                        .get_mut(*id)
                        .grad_mut()
                        .expect("parameters carry gradients");
                    for (a, v) in acc.iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                Op::Relu(x) => {
                    if self.is_tracked(*x) {
                        let xv = self.value(*x).data();
                        let gx = g
                            .iter()
                            .zip(xv)
                            .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                            .collect();
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Scale(x, f) => {
                    if self.is_tracked(*x) {
                        accumulate(&mut grads, *x, g.iter().map(|v| v * f).collect());
                    }
                }
                Op::Concat(inputs) => {
                    let (n, channels, h, w) = node.value.nchw()?;
                    let hw = h * w;
                    let mut start = 0;
                    for &v in inputs {
                        let c = self.value(v).shape()[1];
                        if self.is_tracked(v) {
                            let mut gv = Vec::with_capacity(n * c * hw);
                            for s in 0..n {
                                let off = s * channels * hw + start * hw;
                                gv.extend_from_slice(&g[off..off + c * hw]);
                            }
                            accumulate(&mut grads, v, gv);
                        }
                        start += c;
                    }
                }
                Op::Loss { pred, dpred } => {
                    let s = g[0];
                    accumulate(&mut grads, *pred, dpred.iter().map(|d| d * s).collect());
                }
                Op::Conv {
                    input,
                    kernel,
                    bias,
                } => {
                    let (n, d) = self.conv_dims(*input, *kernel)?;
                    let x = self.value(*input).data();
                    let kd = self.value(*kernel).data();
                    let need_input = self.is_tracked(*input);
                    let (gk, gb, gx) = conv_backward(x, kd, &g, n, &d, need_input);
                    accumulate(&mut grads, *kernel, gk);
                    accumulate(&mut grads, *bias, gb);
                    if let Some(gx) = gx {
                        accumulate(&mut grads, *input, gx);
                    }
                }
                Op::SparseConv {
                    input,
                    kernel,
                    bias,
                    mask,
                    denom,
                    ..
                } => {
                    let (n, d) = self.conv_dims(*input, *kernel)?;
                    let hw = d.h * d.w;
                    let (isz, osz) = (d.in_ch * hw, d.out_ch * hw);
                    let x = self.value(*input).data();
                    let mut masked = vec![0.0; x.len()];
                    for s in 0..n {
                        let m = &mask[s * hw..(s + 1) * hw];
                        for c in 0..d.in_ch {
                            let off = s * isz + c * hw;
                            for i in 0..hw {
                                masked[off + i] = x[off + i] * m[i];
                            }
                        }
                    }
                    // bias sees the raw output gradient, the numerator the
                    // gradient divided by the observation count
                    let mut gnum = g.clone();
                    for s in 0..n {
                        let dn = &denom[s * hw..(s + 1) * hw];
                        for o in 0..d.out_ch {
                            let off = s * osz + o * hw;
                            for i in 0..hw {
                                gnum[off + i] /= dn[i];
                            }
                        }
                    }
                    let kd = self.value(*kernel).data();
                    let need_input = self.is_tracked(*input);
                    let (gk, _, gx) = conv_backward(&masked, kd, &gnum, n, &d, need_input);
                    let gb = bias_grad(&g, n, &d);
                    accumulate(&mut grads, *kernel, gk);
                    accumulate(&mut grads, *bias, gb);
                    if let Some(mut gx) = gx {
                        for s in 0..n {
                            let m = &mask[s * hw..(s + 1) * hw];
                            for c in 0..d.in_ch {
                                let off = s * isz + c * hw;
                                for i in 0..hw {
                                    gx[off + i] *= m[i];
                                }
                            }
                        }
                        accumulate(&mut grads, *input, gx);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

fn bias_grad(g: &[f64], n: usize, d: &ConvDims) -> Vec<f64> {
    let hw = d.h * d.w;
    let mut gb = vec![0.0; d.out_ch];
    for s in 0..n {
        for (o, b) in gb.iter_mut().enumerate() {
            let off = (s * d.out_ch + o) * hw;
            *b += g[off..off + hw].iter().sum::<f64>();
        }
    }
    gb
}

fn conv_backward(
    x: &[f64],
    kernel: &[f64],
    g: &[f64],
    n: usize,
    d: &ConvDims,
    need_input: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let hw = d.h * d.w;
    let (isz, osz) = (d.in_ch * hw, d.out_ch * hw);
    let mut gk = vec![0.0; kernel.len()];
    let mut gx = need_input.then(|| vec![0.0; x.len()]);
    for s in 0..n {
        conv::backward(
            &x[s * isz..(s + 1) * isz],
            kernel,
            &g[s * osz..(s + 1) * osz],
            d,
            &mut gk,
            gx.as_mut().map(|v| &mut v[s * isz..(s + 1) * isz]),
        );
    }
    (gk, bias_grad(g, n, d), gx)
}
