//! Same-padded stride-1 2D cross-correlation kernels on raw buffers.
//!
//! Work is done in row blocks: an im2col buffer for a block of output rows
//! is multiplied against the kernel matrix with a GEMM, which keeps the
//! scratch memory bounded for large images.

/// Upper bound on scratch elements per block.
const BLOCK_ELEMS: usize = 1 << 21;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvDims {
    fn patch(&self) -> usize {
        self.in_ch * self.k * self.k
    }

    fn block_rows(&self) -> usize {
        (BLOCK_ELEMS / (self.patch() * self.w).max(1)).clamp(1, self.h)
    }
}

/// Fill `cols` (`patch × (rows·w)`, row-major) for output rows `r0..r1`.
fn im2col(input: &[f64], d: &ConvDims, r0: usize, r1: usize, cols: &mut [f64]) {
    let (h, w, k) = (d.h as isize, d.w, d.k);
    let pad = (k / 2) as isize;
    let n = (r1 - r0) * w;
    for c in 0..d.in_ch {
        let plane = &input[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                let dx = kx as isize - pad;
                // valid output columns: 0 <= x + dx < w
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for (bi, y) in (r0..r1).enumerate() {
                    let out = &mut dst[bi * w..(bi + 1) * w];
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h || x0 >= x1 {
                        out.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out[..x0].fill(0.0);
                    out[x1..].fill(0.0);
                    let sx0 = (x0 as isize + dx) as usize;
                    out[x0..x1].copy_from_slice(&src_row[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Scatter-add `cols` back into `grad_in` (adjoint of [`im2col`]).
fn col2im(cols: &[f64], d: &ConvDims, r0: usize, r1: usize, grad_in: &mut [f64]) {
    let (h, w, k) = (d.h as isize, d.w, d.k);
    let pad = (k / 2) as isize;
    let n = (r1 - r0) * w;
    for c in 0..d.in_ch {
        let plane = &mut grad_in[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for (bi, y) in (r0..r1).enumerate() {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    let sx0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + sx0..sy as usize * w + sx0 + (x1 - x0)];
                    for (g, s) in dst.iter_mut().zip(&src[bi * w + x0..bi * w + x1]) {
                        *g += s;
                    }
                }
            }
        }
    }
}

/// `c[m×n] = beta·c + a[m×k]·b[k×n]` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the callers pass slices that cover every strided element
    // touched for the given dimensions; checked by the debug assertions.
    debug_assert!(a.len() as isize > (m as isize - 1) * rsa + (k as isize - 1) * csa || k == 0);
    debug_assert!(b.len() as isize > (k as isize - 1) * rsb + (n as isize - 1) * csb || k == 0);
    debug_assert!(c.len() as isize > (m as isize - 1) * rsc + (n as isize - 1) * csc);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Forward pass for one sample: `out[o] = Σ kernel[o] ⋆ input (+ bias[o])`.
/// `input` is `in_ch·h·w`, `out` is `out_ch·h·w`, `kernel` is
/// `out_ch × in_ch·k·k`.
pub(crate) fn forward(input: &[f64], kernel: &[f64], bias: Option<&[f64]>, d: &ConvDims, out: &mut [f64]) {
    let hw = d.h * d.w;
    let patch = d.patch();
    let br = d.block_rows();
    let mut cols = vec![0.0; patch * br * d.w];
    let mut r0 = 0;
    while r0 < d.h {
        let r1 = (r0 + br).min(d.h);
        let n = (r1 - r0) * d.w;
        im2col(input, d, r0, r1, &mut cols[..patch * n]);
        gemm(
            d.out_ch,
            patch,
            n,
            kernel,
            patch as isize,
            1,
            &cols[..patch * n],
            n as isize,
            1,
            0.0,
            &mut out[r0 * d.w..],
            hw as isize,
            1,
        );
        r0 = r1;
    }
    if let Some(b) = bias {
        for (o, &bo) in b.iter().enumerate() {
            out[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v += bo);
        }
    }
}

/// Backward pass for one sample. Accumulates into `grad_kernel` and, when
/// given, into `grad_input`.
pub(crate) fn backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    d: &ConvDims,
    grad_kernel: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    let hw = d.h * d.w;
    let patch = d.patch();
    let br = d.block_rows();
    let mut cols = vec![0.0; patch * br * d.w];
    let mut gcols = if grad_input.is_some() {
        vec![0.0; patch * br * d.w]
    } else {
        Vec::new()
    };
    let mut r0 = 0;
    while r0 < d.h {
        let r1 = (r0 + br).min(d.h);
        let n = (r1 - r0) * d.w;
        im2col(input, d, r0, r1, &mut cols[..patch * n]);
        // gK[o×patch] += gOut[o×n] · colsᵀ[n×patch]
        gemm(
            d.out_ch,
            n,
            patch,
            &grad_out[r0 * d.w..],
            hw as isize,
            1,
            &cols[..patch * n],
            1,
            n as isize,
            1.0,
            grad_kernel,
            patch as isize,
            1,
        );
        if let Some(gi) = grad_input.as_deref_mut() {
            // gCols[patch×n] = Kᵀ[patch×o] · gOut[o×n]
            gemm(
                patch,
                d.out_ch,
                n,
                kernel,
                1,
                patch as isize,
                &grad_out[r0 * d.w..],
                hw as isize,
                1,
                0.0,
                &mut gcols[..patch * n],
                n as isize,
                1,
            );
            col2im(&gcols[..patch * n], d, r0, r1, gi);
        }
        r0 = r1;
    }
}

/// Sum of `plane` over the `k×k` window centred on each pixel (zero padding).
pub(crate) fn box_sum(plane: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let mut horiz = vec![0.0; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(pad);
            let hi = (x + pad).min(w - 1);
            horiz[y * w + x] = row[lo..=hi].iter().sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(pad);
        let hi = (y + pad).min(h - 1);
        for yy in lo..=hi {
            for x in 0..w {
                out[y * w + x] += horiz[yy * w + x];
            }
        }
    }
    out
}

/// Max of `plane` over the `k×k` window (zero padding).
pub(crate) fn box_max(plane: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let mut horiz = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(pad);
            let hi = (x + pad).min(w - 1);
            horiz[y * w + x] = plane[y * w + lo..=y * w + hi]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(pad);
        let hi = (y + pad).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| horiz[yy * w + x]).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}
