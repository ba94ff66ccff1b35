//! Frame-to-frame odometry over a scan sequence, the accumulated world map
//! and trajectory evaluation.

mod eval;
mod map;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use eval::{evaluate_trajectory, frame_errors, TrajEvalReport};
pub use map::{export_map, parse_ply, read_ply, voxel_filter, WorldMap, DEFAULT_VOXEL_SIZE};

use crate::completion::{complete_depth, CompletionModel};
use crate::pointcloud_io::{depth_to_cloud, project_to_depth, Camera};
use crate::registration::{icp_register, ndt_register, pose_apply, IcpConfig, Method, NdtConfig, RegistrationResult};
use crate::{Error, Grid, PointCloud, Pose6, Result, ScanSequence};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryConfig {
    pub method: Method,
    pub ndt: NdtConfig,
    pub icp: IcpConfig,
    /// seed each registration with the previous relative motion
    pub constant_velocity: bool,
    /// map voxel size in meters; 0 keeps every point
    pub voxel_size: f64,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            method: Method::Ndt,
            ndt: NdtConfig {
                coarse_cell_size: Some(2.0),
                ..NdtConfig::default()
            },
            icp: IcpConfig::default(),
            constant_velocity: true,
            voxel_size: DEFAULT_VOXEL_SIZE,
        }
    }
}

/// Densify each frame through a completion model before registration.
#[derive(Debug, Clone, Copy)]
pub struct Enrichment<'a> {
    pub model: &'a CompletionModel,
    pub camera: &'a Camera,
    /// one gray frame per scan, for the image branch
    pub images: Option<&'a [Grid]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub iterations: usize,
    pub score: f64,
    pub converged: bool,
    /// the previous relative motion was reused
    pub fallback: bool,
    /// points in the (possibly enriched) frame
    pub points: usize,
}

impl FrameDiagnostics {
    pub const CSV_HEADER: &'static str = "frame,iterations,score,converged,fallback,points";
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// world pose of each frame; the first is the identity
    pub poses: Vec<Pose6>,
    pub per_frame: Vec<FrameDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn write_diagnostics(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::from(FrameDiagnostics::CSV_HEADER);
        text.push('\n');
        for d in &self.per_frame {
            text.push_str(&format!(
                "{},{},{:.12e},{},{},{}\n",
                d.frame,
                d.iterations,
                d.score,
                u8::from(d.converged),
                u8::from(d.fallback),
                d.points
            ));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Replace the part of `cloud` the camera sees by the completed depth
/// image, unprojected. Pixels with a measurement keep the measured depth, and
/// points outside the camera frustum are kept as they are.
pub fn enrich_cloud(cloud: &PointCloud, model: &CompletionModel, camera: &Camera, gray: Option<&Grid>) -> Result<PointCloud> {
    let proj = project_to_depth(cloud, &camera.intr, camera.width, camera.height)?;
    let mut dense = complete_depth(model, &proj.image, gray)?;
    // measured pixels keep their measured depth
    for (i, &m) in proj.image.mask.iter().enumerate() {
        if m == 1 {
            dense.depth[i] = proj.image.depth[i];
            dense.mask[i] = 1;
        }
    }
    let outside: Vec<usize> = (0..cloud.len()).filter(|&i| camera.pixel(&cloud.points[i]).is_none()).collect();
    let kept = cloud.filter_indices(&outside);
    let added = depth_to_cloud(&dense, &camera.intr);
    Ok(PointCloud {
        points: kept.points.into_iter().chain(added.points).collect(),
        intensity: None,
    })
}

fn register(input: &PointCloud, reference: &PointCloud, init: &Pose6, cfg: &OdometryConfig) -> Result<RegistrationResult> {
    match cfg.method {
        Method::Ndt => ndt_register(input, reference, init, &cfg.ndt),
        Method::Icp => icp_register(input, reference, init, &cfg.icp),
    }
}

/// Register every frame onto its predecessor and chain the motions.
/// A failed or non-converged registration is logged in the diagnostics and
/// replaced by the previous relative motion.
pub fn run_odometry(seq: &ScanSequence, cfg: &OdometryConfig, enrich: Option<&Enrichment>) -> Result<(Trajectory, WorldMap)> {
    seq.validate()?;
    let n = seq.frames.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("odometry needs two frames, got {n}")));
    }
    if !(cfg.voxel_size >= 0.0 && cfg.voxel_size.is_finite()) {
        return Err(Error::InvalidArgument(format!("voxel size {} must be >= 0", cfg.voxel_size)));
    }
    if let Some(Enrichment { images: Some(imgs), .. }) = enrich {
        if imgs.len() != n {
            return Err(Error::Shape(format!("{} images for {n} scans", imgs.len())));
        }
    }
    let frame = |k: usize| -> Result<PointCloud> {
        match enrich {
            Some(e) => enrich_cloud(&seq.frames[k], e.model, e.camera, e.images.map(|g| &g[k])),
            None => Ok(seq.frames[k].clone()),
        }
    };
    let mut prev = frame(0)?;
    let mut poses = vec![Pose6::identity()];
    let mut per_frame = vec![FrameDiagnostics {
        frame: 0,
        iterations: 0,
        score: 0.0,
        converged: true,
        fallback: false,
        points: prev.len(),
    }];
    let mut world = vec![prev.clone()];
    let mut velocity = Pose6::identity();
    for k in 1..n {
        let cur = frame(k)?;
        let init = if cfg.constant_velocity { velocity } else { Pose6::identity() };
        let (rel, diag) = match register(&cur, &prev, &init, cfg) {
            Ok(r) if r.converged => (r.pose, (r.iterations, r.final_score, true, false)),
            Ok(r) => {
                log::warn!("frame {k}: registration did not converge, holding the previous motion");
                (velocity, (r.iterations, r.final_score, false, true))
            }
            Err(e) => {
                log::warn!("frame {k}: registration failed ({e}), holding the previous motion");
                (velocity, (0, f64::NAN, false, true))
            }
        };
        velocity = rel;
        let pose = poses[k - 1].compose(&rel);
        per_frame.push(FrameDiagnostics {
            frame: k,
            iterations: diag.0,
            score: diag.1,
            converged: diag.2,
            fallback: diag.3,
            points: cur.len(),
        });
        world.push(pose_apply(&pose, &cur));
        poses.push(pose);
        prev = cur;
    }
    let refs: Vec<&PointCloud> = world.iter().collect();
    let all = PointCloud::concat(&refs);
    let points = if cfg.voxel_size > 0.0 { voxel_filter(&all, cfg.voxel_size)? } else { all };
    Ok((
        Trajectory { poses, per_frame },
        WorldMap {
            points,
            voxel_size: cfg.voxel_size,
        },
    ))
}
