//! Point clouds, depth images and the file formats that carry them.
//!
//! Clouds use the KITTI Velodyne binary layout, depth maps the KITTI
//! depth-completion 16-bit PNG encoding and trajectories the KITTI pose
//! text format.

mod downsample;
mod image_io;
mod kitti;
mod projection;
mod sequence;
mod synth;

pub use downsample::{downsample_channels, elevation_ring, DownsampleMode, RingBinning};
pub use image_io::{read_depth_png, read_gray_png, write_depth_png, write_gray_png};
pub use kitti::{
    format_kitti_pose, parse_kitti_pose, parse_velodyne, read_kitti_poses, read_velodyne_bin,
    velodyne_bytes, write_kitti_poses, write_velodyne_bin,
};
pub use projection::{depth_to_cloud, project_to_depth, Camera, CameraIntrinsics, Projection};
pub use sequence::{read_sequence_dir, read_sequence_images, write_sequence_dir, write_sequence_images};
pub use synth::{
    render_camera, synth_scene, CameraFrame, LidarModel, Primitive, Scene,
};

use nalgebra::Point3;

use crate::{Error, Result};

/// An unordered set of 3D points in the sensor frame, with optional
/// per-point reflectance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub intensity: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            intensity: None,
        }
    }

    pub fn with_intensity(points: Vec<Point3<f64>>, intensity: Vec<f64>) -> Result<Self> {
        let cloud = Self {
            points,
            intensity: Some(intensity),
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = &self.intensity {
            if i.len() != self.points.len() {
                return Err(Error::Shape(format!(
                    "{} intensity values for {} points",
                    i.len(),
                    self.points.len()
                )));
            }
        }
        if let Some(index) = self
            .points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }

    pub fn intensity_at(&self, i: usize) -> Option<f64> {
        self.intensity.as_ref().map(|v| v[i])
    }

    /// Keep the points selected by `keep`, carrying intensity along.
    pub fn filter_indices(&self, keep: &[usize]) -> PointCloud {
        PointCloud {
            points: keep.iter().map(|&i| self.points[i]).collect(),
            intensity: self
                .intensity
                .as_ref()
                .map(|v| keep.iter().map(|&i| v[i]).collect()),
        }
    }

    /// Concatenate clouds. Intensity survives only if every part has it.
    pub fn concat(parts: &[&PointCloud]) -> PointCloud {
        let points = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let intensity = if parts.iter().all(|c| c.intensity.is_some()) && !parts.is_empty() {
            Some(
                parts
                    .iter()
                    .flat_map(|c| c.intensity.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        PointCloud { points, intensity }
    }
}

/// Dense grid of depths in meters with a {0,1} validity mask.
///
/// `depth[i] > 0` exactly where `mask[i] == 1`; invalid pixels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub mask: Vec<u8>,
}

impl DepthImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            mask: vec![0; width * height],
        }
    }

    /// Build from raw depths, marking every strictly positive finite value valid.
    pub fn from_depths(width: usize, height: usize, depths: Vec<f64>) -> Result<Self> {
        if depths.len() != width * height {
            return Err(Error::Shape(format!(
                "{} depths for a {width}x{height} image",
                depths.len()
            )));
        }
        let mut img = Self::empty(width, height);
        for (i, d) in depths.into_iter().enumerate() {
            if d.is_finite() && d > 0.0 {
                img.depth[i] = d;
                img.mask[i] = 1;
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.index(row, col);
        (self.mask[i] == 1).then_some(self.depth[i])
    }

    pub fn set(&mut self, row: usize, col: usize, depth: f64) {
        let i = self.index(row, col);
        if depth.is_finite() && depth > 0.0 {
            self.depth[i] = depth;
            self.mask[i] = 1;
        } else {
            self.depth[i] = 0.0;
            self.mask[i] = 0;
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Check the mask/depth consistency invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.depth.len() != n || self.mask.len() != n {
            return Err(Error::Shape(format!(
                "depth {} / mask {} entries for {}x{}",
                self.depth.len(),
                self.mask.len(),
                self.width,
                self.height
            )));
        }
        for (i, (&d, &m)) in self.depth.iter().zip(&self.mask).enumerate() {
            let ok = match m {
                1 => d.is_finite() && d > 0.0,
                0 => d == 0.0,
                _ => false,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "pixel {i}: depth {d} inconsistent with mask {m}"
                )));
            }
        }
        Ok(())
    }

    /// Fill every invalid pixel with the depth of the nearest valid pixel
    /// (Euclidean pixel distance, ties go to the first pixel in scan order).
    /// Returns `None` when no pixel is valid.
    pub fn nearest_fill(&self) -> Option<Vec<f64>> {
        let valid: Vec<(usize, usize, f64)> = (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter_map(|(r, c)| self.get(r, c).map(|d| (r, c, d)))
            .collect();
        if valid.is_empty() {
            return None;
        }
        if valid.len() == self.depth.len() {
            return Some(self.depth.clone());
        }
        Some(nearest_fill_transform(self, &valid))
    }
}

/// Exact nearest-valid fill. Per row only the two valid columns bracketing
/// the query can be nearest, so the search is over populated rows.
fn nearest_fill_transform(img: &DepthImage, valid: &[(usize, usize, f64)]) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    // For each row, the sorted list of valid columns.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); h];
    for &(r, c, d) in valid {
        rows[r].push((c, d));
    }
    let populated: Vec<usize> = (0..h).filter(|&r| !rows[r].is_empty()).collect();
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if img.mask[i] == 1 {
                out[i] = img.depth[i];
                continue;
            }
            let mut best = (usize::MAX, f64::NAN);
            for &pr in &populated {
                let dr = r.abs_diff(pr);
                let dr2 = dr * dr;
                if dr2 > best.0 {
                    continue;
                }
                let cols = &rows[pr];
                let pos = cols.partition_point(|&(cc, _)| cc < c);
                for cand in [pos.checked_sub(1), Some(pos)].into_iter().flatten() {
                    if let Some(&(cc, d)) = cols.get(cand) {
                        let dc = c.abs_diff(cc);
                        let dist = dr2 + dc * dc;
                        // strict comparison: the first candidate in scan order wins ties
                        if dist < best.0 {
                            best = (dist, d);
                        }
                    }
                }
            }
            out[i] = best.1;
        }
    }
    out
}

/// Ordered frames with optional timing and world-frame ground truth.
#[derive(Debug, Clone, Default)]
pub struct ScanSequence {
    pub frames: Vec<PointCloud>,
    pub timestamps: Option<Vec<f64>>,
    pub ground_truth: Option<Vec<crate::Pose6>>,
}

impl ScanSequence {
    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if let Some(t) = &self.timestamps {
            if t.len() != n {
                return Err(Error::Shape(format!("{} timestamps for {n} frames", t.len())));
            }
            if t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Domain("timestamps not strictly increasing".into()));
            }
        }
        if let Some(g) = &self.ground_truth {
            if g.len() != n {
                return Err(Error::Shape(format!("{} poses for {n} frames", g.len())));
            }
        }
        self.frames.iter().try_for_each(PointCloud::validate)
    }
}
