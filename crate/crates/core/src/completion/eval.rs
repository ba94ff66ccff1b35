use std::fmt;

use crate::{DepthImage, Error, Result};

/// Depth error over the pixels valid in the ground truth, in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthEvalReport {
    pub mae_mm: f64,
    pub rmse_mm: f64,
    pub n_pixels: usize,
}

impl DepthEvalReport {
    pub const CSV_HEADER: &'static str = "rmse_mm,mae_mm,n_pixels";

    /// Pool reports as if all their pixels had been evaluated together.
    pub fn pooled(reports: &[DepthEvalReport]) -> Result<Self> {
        let n: usize = reports.iter().map(|r| r.n_pixels).sum();
        if n == 0 {
            return Err(Error::Domain("no evaluated pixels to pool".into()));
        }
        let abs: f64 = reports.iter().map(|r| r.mae_mm * r.n_pixels as f64).sum();
        let sq: f64 = reports.iter().map(|r| r.rmse_mm * r.rmse_mm * r.n_pixels as f64).sum();
        Ok(Self {
            mae_mm: abs / n as f64,
            rmse_mm: (sq / n as f64).sqrt(),
            n_pixels: n,
        })
    }
}

impl fmt::Display for DepthEvalReport {
    /// The CSV row `rmse_mm,mae_mm,n_pixels`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3},{:.3},{}", self.rmse_mm, self.mae_mm, self.n_pixels)
    }
}

/// MAE and RMSE over every gt-valid pixel. A prediction missing at such a
/// pixel counts as depth 0.
pub fn evaluate_depth(pred: &DepthImage, gt: &DepthImage) -> Result<DepthEvalReport> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs gt {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    pred.validate()?;
    gt.validate()?;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut n = 0usize;
    for i in 0..gt.depth.len() {
        if gt.mask[i] == 1 {
            let e = (gt.depth[i] - pred.depth[i]) * 1000.0;
            abs += e.abs();
            sq += e * e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Domain("ground truth has no valid pixel".into()));
    }
    Ok(DepthEvalReport {
        mae_mm: abs / n as f64,
        rmse_mm: (sq / n as f64).sqrt(),
        n_pixels: n,
    })
}

/// Every pixel takes the depth of its nearest observed pixel.
pub fn nearest_fill_baseline(sparse: &DepthImage) -> Result<DepthImage> {
    let filled = sparse
        .nearest_fill()
        .ok_or_else(|| Error::Domain("sparse image has no valid pixel".into()))?;
    DepthImage::from_depths(sparse.width, sparse.height, filled)
}
