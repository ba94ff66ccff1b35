use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pointcloud_io::{
    downsample_channels, project_to_depth, render_camera, synth_scene, Camera, DownsampleMode, RingBinning, Scene,
};
use crate::{DepthImage, Error, Grid, Pose6, Result};

/// One training pair: 16-channel sparse input, 64-channel target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub sparse: DepthImage,
    pub gt: DepthImage,
    pub gray: Option<Grid>,
}

impl TrainSample {
    pub fn new(sparse: DepthImage, gt: DepthImage, gray: Option<Grid>) -> Result<Self> {
        sparse.validate()?;
        gt.validate()?;
        let size = (sparse.width, sparse.height);
        if (gt.width, gt.height) != size {
            return Err(Error::Shape(format!(
                "sparse {}x{} vs gt {}x{}",
                size.0, size.1, gt.width, gt.height
            )));
        }
        if let Some(g) = &gray {
            if (g.width, g.height) != size {
                return Err(Error::Shape(format!("gray {}x{} vs depth {}x{}", g.width, g.height, size.0, size.1)));
            }
        }
        if gt.valid_count() < sparse.valid_count() {
            return Err(Error::Domain(format!(
                "gt has {} valid pixels, fewer than the sparse input's {}",
                gt.valid_count(),
                sparse.valid_count()
            )));
        }
        Ok(Self { sparse, gt, gray })
    }
}

/// Camera covering the front quarter of the sensor's field of view over its
/// full elevation range, 128×64.
pub fn desk_camera() -> Camera {
    Camera::forward_looking(128, 64, 45.0, -24.8, 2.0).expect("valid camera")
}

/// Simulate a 64-channel scan per pose and derive the sample: the target is
/// its projection, the input the projection after keeping every `keep`-th
/// ring, and the gray image a shaded render from the same viewpoint.
pub fn simulate_samples(scene: &Scene, poses: &[Pose6], camera: &Camera, keep: usize) -> Result<Vec<TrainSample>> {
    let seq = synth_scene(scene, poses, 64)?;
    let bins = RingBinning {
        min_deg: scene.lidar.elevation_min_deg,
        max_deg: scene.lidar.elevation_max_deg,
        rings: 64,
    };
    seq.frames
        .iter()
        .zip(poses)
        .map(|(frame, pose)| {
            let gt = project_to_depth(frame, &camera.intr, camera.width, camera.height)?.image;
            let low = downsample_channels(frame, keep, &bins, DownsampleMode::DropRings)?;
            let sparse = project_to_depth(&low, &camera.intr, camera.width, camera.height)?.image;
            let gray = render_camera(scene, pose, camera).gray;
            TrainSample::new(sparse, gt, Some(gray))
        })
        .collect()
}

/// The desk-scale split: 24 training and 8 test frames from random poses
/// along the street scene, 64 channels reduced to 16.
pub fn desk_split(seed: u64) -> Result<(Vec<TrainSample>, Vec<TrainSample>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<Pose6> = (0..32)
        .map(|_| {
            Pose6::new(
                rng.random_range(-2.0..30.0),
                rng.random_range(-2.0..2.0),
                1.73,
                0.0,
                0.0,
                rng.random_range(-0.4..0.4),
            )
        })
        .collect();
    let mut all = simulate_samples(&Scene::street(), &poses, &desk_camera(), 4)?;
    let test = all.split_off(24);
    Ok((all, test))
}
