//! Rigid registration of one scan onto another: point-to-point ICP and NDT
//! with a quasi-Newton pose search.

mod bfgs;
mod icp;
mod kdtree;
mod ndt;
mod pose;

use std::fmt;

pub use bfgs::{minimize, BfgsConfig, BfgsOutcome};
pub use icp::{icp_register, procrustes, IcpConfig};
pub use kdtree::KdTree;
pub use ndt::{
    build_ndt, covariance_floor, ndt_register, ndt_register_grid, ndt_score, ndt_score_gradient, CellIndex,
    GaussianCell, NdtConfig, NdtGrid,
};
pub use pose::{euler_from_rotation, normalize_angle, rotation_derivatives, rotation_from_euler, Pose6};

use crate::{Error, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationResult {
    /// maps the input cloud into the reference frame
    pub pose: Pose6,
    pub iterations: usize,
    pub final_score: f64,
    pub converged: bool,
}

impl fmt::Display for RegistrationResult {
    /// `t_x t_y t_z phi_x phi_y phi_z iterations score converged`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:.12e} {}",
            self.pose,
            self.iterations,
            self.final_score,
            u8::from(self.converged)
        )
    }
}

impl RegistrationResult {
    pub fn parse(line: &str) -> Result<Self> {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 9 {
            return Err(Error::Format(format!("expected 9 fields, got {}", tok.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
        let mut v = [0.0; 6];
        for (o, s) in v.iter_mut().zip(&tok) {
            *o = num(s)?;
        }
        let iterations = tok[6]
            .parse()
            .map_err(|_| Error::Format(format!("bad iteration count {:?}", tok[6])))?;
        let converged = match tok[8] {
            "0" => false,
            "1" => true,
            s => return Err(Error::Format(format!("bad converged flag {s:?}"))),
        };
        Ok(Self {
            pose: Pose6::from_array(v),
            iterations,
            final_score: num(tok[7])?,
            converged,
        })
    }
}

/// Every point moved by `pose`; intensity is carried along.
pub fn pose_apply(pose: &Pose6, cloud: &PointCloud) -> PointCloud {
    let r = pose.rotation();
    let t = pose.translation();
    PointCloud {
        points: cloud.points.iter().map(|p| (r * p.coords + t).into()).collect(),
        intensity: cloud.intensity.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Icp,
    #[default]
    Ndt,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "icp" => Ok(Self::Icp),
            "ndt" => Ok(Self::Ndt),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?} (icp, ndt)"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Icp => "icp",
            Self::Ndt => "ndt",
        })
    }
}
