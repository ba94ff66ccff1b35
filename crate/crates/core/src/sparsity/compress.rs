use super::dct::Dct2;
use crate::{DepthImage, Error, Grid, Result};

/// Reconstruction quality at one kept-coefficient rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionReport {
    pub rate: f64,
    pub rmse_m: f64,
    pub mae_m: f64,
}

/// Best-k-term DCT approximation of a depth map.
///
/// Invalid pixels are first filled from their nearest valid neighbour so
/// the transform sees a dense grid; the largest `⌈rate·W·H⌉` coefficients
/// by magnitude survive. Errors are measured only at originally valid
/// pixels.
pub fn compress_depth(img: &DepthImage, rate: f64) -> Result<(DepthImage, CompressionReport)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("rate {rate} outside (0, 1]")));
    }
    let dense = img
        .nearest_fill()
        .ok_or_else(|| Error::Domain("depth image has no valid pixel".into()))?;
    let grid = Grid::from_vec(img.width, img.height, dense)?;
    let dct = Dct2::new(img.width, img.height)?;
    let mut coeffs = dct.forward(&grid)?;
    let n = coeffs.data.len();
    let keep = ((rate * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    if keep < n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            coeffs.data[b]
                .abs()
                .total_cmp(&coeffs.data[a].abs())
                .then(a.cmp(&b))
        });
        for &i in &order[keep..] {
            coeffs.data[i] = 0.0;
        }
    }
    let recon = dct.inverse(&coeffs)?;
    let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
    for i in 0..n {
        if img.mask[i] == 1 {
            let e = recon.data[i] - img.depth[i];
            se += e * e;
            ae += e.abs();
            count += 1;
        }
    }
    let report = CompressionReport {
        rate,
        rmse_m: (se / count as f64).sqrt(),
        mae_m: ae / count as f64,
    };
    Ok((DepthImage::from_depths(img.width, img.height, recon.data)?, report))
}
