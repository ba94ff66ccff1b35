use nalgebra::Point3;

use super::PointCloud;
use crate::{Error, Result};

/// Equal-angle elevation bins. Bin centers sit at
/// `min_deg + i·(max_deg − min_deg)/(rings − 1)`, so a sensor whose rings
/// span exactly `[min_deg, max_deg]` puts one ring in each bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingBinning {
    pub min_deg: f64,
    pub max_deg: f64,
    pub rings: usize,
}

impl Default for RingBinning {
    /// Velodyne HDL-64 vertical field of view.
    fn default() -> Self {
        Self {
            min_deg: -24.8,
            max_deg: 2.0,
            rings: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DownsampleMode {
    /// Keep every k-th ring, as a physically sparser sensor would.
    #[default]
    DropRings,
    /// Average the range of each group of k rings along the kept ring's rays.
    AverageRings,
}

pub fn elevation_deg(p: &Point3<f64>) -> f64 {
    p.z.atan2(p.x.hypot(p.y)).to_degrees()
}

pub fn elevation_ring(p: &Point3<f64>, bins: &RingBinning) -> usize {
    if bins.rings <= 1 {
        return 0;
    }
    let step = (bins.max_deg - bins.min_deg) / (bins.rings - 1) as f64;
    let r = ((elevation_deg(p) - bins.min_deg) / step).round();
    r.clamp(0.0, (bins.rings - 1) as f64) as usize
}

/// Simulate a sensor with `1/k` of the channels.
pub fn downsample_channels(
    cloud: &PointCloud,
    k: usize,
    bins: &RingBinning,
    mode: DownsampleMode,
) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::InvalidArgument("channel keep factor k must be >= 1".into()));
    }
    if k == 1 || cloud.is_empty() {
        return Ok(cloud.clone());
    }
    let rings: Vec<usize> = cloud.points.iter().map(|p| elevation_ring(p, bins)).collect();
    match mode {
        DownsampleMode::DropRings => {
            let keep: Vec<usize> = (0..cloud.len()).filter(|&i| rings[i] % k == 0).collect();
            Ok(cloud.filter_indices(&keep))
        }
        DownsampleMode::AverageRings => Ok(average_rings(cloud, &rings, k, bins.rings)),
    }
}

fn azimuth(p: &Point3<f64>) -> f64 {
    p.y.atan2(p.x)
}

fn average_rings(cloud: &PointCloud, rings: &[usize], k: usize, n_rings: usize) -> PointCloud {
    // per ring: (azimuth, index), sorted by azimuth
    let mut by_ring: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n_rings];
    for (i, p) in cloud.points.iter().enumerate() {
        by_ring[rings[i]].push((azimuth(p), i));
    }
    for r in &mut by_ring {
        r.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut points = Vec::new();
    let mut intensity = Vec::new();
    for rep in (0..n_rings).step_by(k) {
        let rep_pts = &by_ring[rep];
        if rep_pts.is_empty() {
            continue;
        }
        let tol = half_median_spacing(rep_pts);
        for &(az, i) in rep_pts {
            let p = cloud.points[i];
            let mut range_sum = p.coords.norm();
            let mut refl_sum = cloud.intensity_at(i).unwrap_or(0.0);
            let mut n = 1.0;
            for other in (rep + 1)..(rep + k).min(n_rings) {
                if let Some(j) = nearest_azimuth(&by_ring[other], az, tol) {
                    range_sum += cloud.points[j].coords.norm();
                    refl_sum += cloud.intensity_at(j).unwrap_or(0.0);
                    n += 1.0;
                }
            }
            let dir = p.coords / p.coords.norm();
            points.push(Point3::from(dir * (range_sum / n)));
            intensity.push(refl_sum / n);
        }
    }
    PointCloud {
        points,
        intensity: cloud.intensity.as_ref().map(|_| intensity),
    }
}

fn half_median_spacing(sorted: &[(f64, usize)]) -> f64 {
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1].0 - w[0].0).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return 1e-3;
    }
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2] / 2.0
}

fn nearest_azimuth(sorted: &[(f64, usize)], az: f64, tol: f64) -> Option<usize> {
    let pos = sorted.partition_point(|e| e.0 < az);
    [pos.checked_sub(1), Some(pos)]
        .into_iter()
        .flatten()
        .filter_map(|c| sorted.get(c))
        .map(|&(a, j)| ((a - az).abs(), j))
        .filter(|&(d, _)| d <= tol)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, j)| j)
}
