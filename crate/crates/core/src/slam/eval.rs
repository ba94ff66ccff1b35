use std::fmt;

use crate::{Error, Pose6, Result};

/// Per-frame translational error statistics in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajEvalReport {
    pub max_err: f64,
    pub mean_err: f64,
    pub min_err: f64,
    pub rmse: f64,
    pub std: f64,
    pub frames: usize,
}

impl TrajEvalReport {
    pub const CSV_HEADER: &'static str = "max_err,mean_err,min_err,rmse,std,frames";
}

impl fmt::Display for TrajEvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.max_err, self.mean_err, self.min_err, self.rmse, self.std, self.frames
        )
    }
}

/// Per-frame errors `‖t_est − t_gt‖` after moving the estimate so that its
/// first pose coincides with the first ground-truth pose.
pub fn frame_errors(est: &[Pose6], gt: &[Pose6]) -> Result<Vec<f64>> {
    if est.len() != gt.len() {
        return Err(Error::Shape(format!("{} estimated poses, {} ground truth", est.len(), gt.len())));
    }
    if est.len() < 2 {
        return Err(Error::InvalidArgument("trajectory evaluation needs two poses".into()));
    }
    let align = gt[0].compose(&est[0].inverse());
    Ok(est
        .iter()
        .zip(gt)
        .map(|(e, g)| (align.compose(e).translation() - g.translation()).norm())
        .collect())
}

/// Statistics over frames 1.., the anchored frame 0 excluded.
pub fn evaluate_trajectory(est: &[Pose6], gt: &[Pose6]) -> Result<TrajEvalReport> {
    let errs = frame_errors(est, gt)?;
    let e = &errs[1..];
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(TrajEvalReport {
        max_err: e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_err: mean,
        min_err: e.iter().copied().fold(f64::INFINITY, f64::min),
        rmse: (e.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        std: var.sqrt(),
        frames: e.len(),
    })
}
