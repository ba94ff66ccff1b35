//! Ray-cast scene simulator standing in for recorded drives.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::projection::Camera;
use super::{DepthImage, PointCloud, ScanSequence};
use crate::{Error, Grid, Pose6, Result};

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Infinite plane `normal · x = offset` (normal need not be unit).
    Plane {
        normal: Vector3<f64>,
        offset: f64,
        albedo: f64,
    },
    /// Axis-aligned box.
    Box {
        min: Point3<f64>,
        max: Point3<f64>,
        albedo: f64,
    },
}

impl Primitive {
    pub fn plane(normal: [f64; 3], offset: f64, albedo: f64) -> Self {
        let n = Vector3::from(normal);
        let len = n.norm();
        Primitive::Plane {
            normal: n / len,
            offset: offset / len,
            albedo,
        }
    }

    pub fn cuboid(min: [f64; 3], max: [f64; 3], albedo: f64) -> Self {
        Primitive::Box {
            min: Point3::from(min),
            max: Point3::from(max),
            albedo,
        }
    }

    pub fn albedo(&self) -> f64 {
        match self {
            Primitive::Plane { albedo, .. } | Primitive::Box { albedo, .. } => *albedo,
        }
    }

    /// First intersection along `origin + t·dir` with `t > 0`, returning
    /// `(t, surface normal)`. A ray starting inside a box hits its far wall.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match self {
            Primitive::Plane { normal, offset, .. } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (offset - normal.dot(&origin.coords)) / denom;
                (t > HIT_EPS).then_some((t, *normal))
            }
            Primitive::Box { min, max, .. } => ray_box(origin, dir, min, max),
        }
    }
}

fn ray_box(
    o: &Point3<f64>,
    d: &Vector3<f64>,
    min: &Point3<f64>,
    max: &Point3<f64>,
) -> Option<(f64, Vector3<f64>)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < min[a] || o[a] > max[a] {
                return None;
            }
            continue;
        }
        let mut t0 = (min[a] - o[a]) / d[a];
        let mut t1 = (max[a] - o[a]) / d[a];
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = a;
        }
        if t1 < t_far {
            t_far = t1;
            far_axis = a;
        }
    }
    if t_near > t_far {
        return None;
    }
    let axis_normal = |a: usize| {
        let mut n = Vector3::zeros();
        n[a] = 1.0;
        n
    };
    if t_near > HIT_EPS {
        Some((t_near, axis_normal(near_axis)))
    } else if t_far > HIT_EPS {
        Some((t_far, axis_normal(far_axis)))
    } else {
        None
    }
}

/// Spinning-LiDAR sampling pattern. Rings are spread evenly over
/// `[elevation_min_deg, elevation_max_deg]` (both ends included); azimuths
/// sit at the centers of `azimuth_steps` equal bins over
/// `[azimuth_min_deg, azimuth_max_deg]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarModel {
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub azimuth_steps: usize,
    pub max_range: f64,
    /// Standard deviation of additive Gaussian range noise, meters.
    pub range_noise: f64,
    /// Half-width of a uniform per-firing azimuth offset, degrees. Real
    /// spinning sensors do not hit the same azimuths every revolution.
    pub azimuth_jitter_deg: f64,
    pub noise_seed: u64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            elevation_min_deg: -24.8,
            elevation_max_deg: 2.0,
            azimuth_min_deg: -180.0,
            azimuth_max_deg: 180.0,
            azimuth_steps: 720,
            max_range: 80.0,
            range_noise: 0.0,
            azimuth_jitter_deg: 0.0,
            noise_seed: 0,
        }
    }
}

impl LidarModel {
    pub fn ring_elevations_deg(&self, channels: usize) -> Vec<f64> {
        match channels {
            0 => Vec::new(),
            1 => vec![self.elevation_min_deg],
            n => {
                let step = (self.elevation_max_deg - self.elevation_min_deg) / (n - 1) as f64;
                (0..n).map(|i| self.elevation_min_deg + i as f64 * step).collect()
            }
        }
    }

    pub fn azimuths_deg(&self) -> Vec<f64> {
        let n = self.azimuth_steps;
        let span = self.azimuth_max_deg - self.azimuth_min_deg;
        (0..n)
            .map(|i| self.azimuth_min_deg + (i as f64 + 0.5) * span / n as f64)
            .collect()
    }
}

/// Primitives plus the sensor that observes them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub lidar: LidarModel,
}

impl Scene {
    /// Closest hit over all primitives.
    pub fn cast(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>, f64)> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(origin, dir).map(|(t, n)| (t, n, p.albedo())))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// A street-like scene: ground at `z = 0`, building walls on both sides,
    /// parked boxes and pillars, and a far wall. The sensor is expected near
    /// `z = 1.73`, driving along `+x` from the origin.
    pub fn street() -> Self {
        let mut primitives = vec![Primitive::plane([0.0, 0.0, 1.0], 0.0, 0.35)];
        // building fronts
        primitives.push(Primitive::cuboid([-30.0, 9.0, 0.0], [60.0, 12.0, 8.0], 0.7));
        primitives.push(Primitive::cuboid([-30.0, -12.0, 0.0], [60.0, -9.5, 7.0], 0.6));
        // recesses and protrusions break translational symmetry along x
        primitives.push(Primitive::cuboid([4.0, 7.5, 0.0], [6.5, 9.0, 4.5], 0.9));
        primitives.push(Primitive::cuboid([14.0, 8.0, 0.0], [15.0, 9.0, 6.0], 0.2));
        primitives.push(Primitive::cuboid([22.0, -9.5, 0.0], [26.0, -8.0, 3.0], 0.85));
        primitives.push(Primitive::cuboid([-6.0, -9.5, 0.0], [-3.0, -7.5, 2.5], 0.3));
        // parked cars
        primitives.push(Primitive::cuboid([8.0, -6.5, 0.0], [12.5, -4.7, 1.5], 0.95));
        primitives.push(Primitive::cuboid([17.0, 4.2, 0.0], [21.0, 6.0, 1.6], 0.15));
        primitives.push(Primitive::cuboid([29.0, -6.2, 0.0], [33.5, -4.4, 1.4], 0.5));
        primitives.push(Primitive::cuboid([1.0, 4.5, 0.0], [3.0, 6.0, 1.2], 0.8));
        // pillars
        for (i, x) in [7.0, 13.0, 19.0, 25.0, 31.0].iter().enumerate() {
            let side = if i % 2 == 0 { 3.2 } else { -3.6 };
            primitives.push(Primitive::cuboid(
                [*x, side - 0.25, 0.0],
                [*x + 0.5, side + 0.25, 3.5],
                0.1 + 0.15 * i as f64,
            ));
        }
        primitives.push(Primitive::cuboid([45.0, -12.0, 0.0], [46.0, 12.0, 10.0], 0.55));
        Self {
            primitives,
            lidar: LidarModel::default(),
        }
    }

    /// An enclosed yard: ground at `z = 0`, four walls about 8 to 11 m from
    /// the origin, and crates of assorted sizes. Most rings of a sensor at
    /// `z = 1.73` land on vertical surfaces.
    pub fn courtyard() -> Self {
        let mut primitives = vec![Primitive::plane([0.0, 0.0, 1.0], 0.0, 0.4)];
        primitives.push(Primitive::cuboid([-9.3, -12.0, 0.0], [-8.37, 12.0, 6.0], 0.7));
        primitives.push(Primitive::cuboid([10.81, -12.0, 0.0], [11.9, 12.0, 5.0], 0.6));
        primitives.push(Primitive::cuboid([-9.3, 8.62, 0.0], [11.9, 9.6, 7.0], 0.5));
        primitives.push(Primitive::cuboid([-9.3, -11.1, 0.0], [11.9, -9.74, 4.0], 0.8));
        let crates = [
            ([3.13, 2.07], [1.21, 0.83], 1.1),
            ([-4.04, 3.58], [0.62, 1.47], 2.2),
            ([5.61, -4.09], [1.53, 1.04], 0.9),
            ([-2.46, -5.13], [0.81, 0.77], 1.6),
            ([8.18, 4.92], [0.49, 2.03], 3.0),
            ([-6.57, -1.14], [1.02, 0.51], 1.3),
            ([1.09, -7.38], [1.96, 0.62], 2.5),
            ([-5.11, 6.69], [1.38, 0.99], 0.7),
        ];
        for (i, (c, half, h)) in crates.iter().enumerate() {
            primitives.push(Primitive::cuboid(
                [c[0] - half[0], c[1] - half[1], 0.0],
                [c[0] + half[0], c[1] + half[1], *h],
                0.2 + 0.1 * i as f64,
            ));
        }
        Self {
            primitives,
            lidar: LidarModel::default(),
        }
    }

    /// Parse the `key = value` scene file. `plane` and `box` may repeat:
    /// `plane = nx ny nz offset [albedo]`, `box = x0 y0 z0 x1 y1 z1 [albedo]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut scene = Scene::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = n + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("scene line {lineno}: expected key = value")))?;
            let key = key.trim();
            let nums: Vec<f64> = value
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Format(format!("scene line {lineno}: bad number {t:?}")))
                })
                .collect::<Result<_>>()?;
            let scalar = || -> Result<f64> {
                match nums.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(Error::Format(format!("scene line {lineno}: {key} takes one value"))),
                }
            };
            let l = &mut scene.lidar;
            match key {
                "plane" => match nums.as_slice() {
                    [a, b, c, d] => scene.primitives.push(Primitive::plane([*a, *b, *c], *d, 0.5)),
                    [a, b, c, d, e] => scene.primitives.push(Primitive::plane([*a, *b, *c], *d, *e)),
                    _ => return Err(Error::Format(format!("scene line {lineno}: plane takes 4 or 5 values"))),
                },
                "box" => match nums.as_slice() {
                    [a, b, c, d, e, f] => scene.primitives.push(Primitive::cuboid([*a, *b, *c], [*d, *e, *f], 0.5)),
                    [a, b, c, d, e, f, g] => {
                        scene.primitives.push(Primitive::cuboid([*a, *b, *c], [*d, *e, *f], *g))
                    }
                    _ => return Err(Error::Format(format!("scene line {lineno}: box takes 6 or 7 values"))),
                },
                "elevation_min_deg" => l.elevation_min_deg = scalar()?,
                "elevation_max_deg" => l.elevation_max_deg = scalar()?,
                "azimuth_min_deg" => l.azimuth_min_deg = scalar()?,
                "azimuth_max_deg" => l.azimuth_max_deg = scalar()?,
                "azimuth_steps" => l.azimuth_steps = scalar()? as usize,
                "max_range" => l.max_range = scalar()?,
                "range_noise" => l.range_noise = scalar()?,
                "azimuth_jitter_deg" => l.azimuth_jitter_deg = scalar()?,
                "noise_seed" => l.noise_seed = scalar()? as u64,
                other => return Err(Error::Format(format!("scene line {lineno}: unknown key {other:?}"))),
            }
        }
        Ok(scene)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let l = &self.lidar;
        let mut s = String::new();
        let _ = writeln!(s, "elevation_min_deg = {}", l.elevation_min_deg);
        let _ = writeln!(s, "elevation_max_deg = {}", l.elevation_max_deg);
        let _ = writeln!(s, "azimuth_min_deg = {}", l.azimuth_min_deg);
        let _ = writeln!(s, "azimuth_max_deg = {}", l.azimuth_max_deg);
        let _ = writeln!(s, "azimuth_steps = {}", l.azimuth_steps);
        let _ = writeln!(s, "max_range = {}", l.max_range);
        let _ = writeln!(s, "range_noise = {}", l.range_noise);
        let _ = writeln!(s, "azimuth_jitter_deg = {}", l.azimuth_jitter_deg);
        let _ = writeln!(s, "noise_seed = {}", l.noise_seed);
        for p in &self.primitives {
            match p {
                Primitive::Plane { normal, offset, albedo } => {
                    let _ = writeln!(s, "plane = {} {} {} {} {}", normal.x, normal.y, normal.z, offset, albedo);
                }
                Primitive::Box { min, max, albedo } => {
                    let _ = writeln!(
                        s,
                        "box = {} {} {} {} {} {} {}",
                        min.x, min.y, min.z, max.x, max.y, max.z, albedo
                    );
                }
            }
        }
        s
    }
}

/// Simulate one scan per sensor pose. Each frame is in its sensor frame;
/// intensity is albedo times the cosine of incidence.
pub fn synth_scene(scene: &Scene, poses: &[Pose6], channels: usize) -> Result<ScanSequence> {
    if scene.primitives.is_empty() {
        return Err(Error::InvalidArgument("scene has no primitives".into()));
    }
    if channels == 0 {
        return Err(Error::InvalidArgument("channels must be >= 1".into()));
    }
    let lidar = &scene.lidar;
    let elevations = lidar.ring_elevations_deg(channels);
    let azimuths = lidar.azimuths_deg();
    let ray = |el: f64, az: f64| {
        let (el, az) = (el.to_radians(), az.to_radians());
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    };
    let base: Vec<(f64, f64)> = elevations
        .iter()
        .flat_map(|&el| azimuths.iter().map(move |&az| (el, az)))
        .collect();
    let noise = if lidar.range_noise > 0.0 {
        Some(Normal::new(0.0, lidar.range_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let jitter = lidar.azimuth_jitter_deg.abs();
    let mut frames = Vec::with_capacity(poses.len());
    for (k, pose) in poses.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(lidar.noise_seed.wrapping_mul(0x9E37_79B9).wrapping_add(k as u64));
        let rot = pose.rotation();
        let origin = Point3::from(pose.translation());
        let mut points = Vec::new();
        let mut intensity = Vec::new();
        let dirs: Vec<Vector3<f64>> = base
            .iter()
            .map(|&(el, az)| {
                let dz = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
                ray(el, az + dz)
            })
            .collect();
        for d in &dirs {
            let wd = rot * d;
            if let Some((t, n, albedo)) = scene.cast(&origin, &wd) {
                if t > lidar.max_range {
                    continue;
                }
                let r = match &noise {
                    Some(nd) => (t + nd.sample(&mut rng)).max(0.01),
                    None => t,
                };
                points.push(Point3::from(d * r));
                intensity.push(albedo * n.dot(&wd).abs());
            }
        }
        frames.push(PointCloud {
            points,
            intensity: Some(intensity),
        });
    }
    Ok(ScanSequence {
        frames,
        timestamps: Some((0..poses.len()).map(|k| k as f64 * 0.1).collect()),
        ground_truth: Some(poses.to_vec()),
    })
}

/// Dense camera-frame depth and a shaded intensity image.
#[derive(Debug, Clone)]
pub struct CameraFrame {
    pub depth: DepthImage,
    pub gray: Grid,
}

/// Render what a camera rigidly attached to the sensor sees: per-pixel
/// first-hit depth (camera z) and Lambertian-shaded albedo with a headlight.
pub fn render_camera(scene: &Scene, sensor_pose: &Pose6, camera: &Camera) -> CameraFrame {
    let cam_to_world = sensor_pose.compose(&camera.intr.extrinsic.inverse());
    let rot = cam_to_world.rotation();
    let origin = Point3::from(cam_to_world.translation());
    let mut depth = DepthImage::empty(camera.width, camera.height);
    let mut gray = Grid::zeros(camera.width, camera.height);
    for row in 0..camera.height {
        for col in 0..camera.width {
            let ray = camera.intr.pixel_ray(row, col);
            let wd = rot * ray;
            if let Some((t, n, albedo)) = scene.cast(&origin, &wd) {
                if t * ray.norm() > scene.lidar.max_range {
                    continue;
                }
                depth.set(row, col, t);
                let cos = n.dot(&wd).abs() / wd.norm();
                *gray.at_mut(row, col) = albedo * (0.25 + 0.75 * cos);
            }
        }
    }
    CameraFrame { depth, gray }
}
