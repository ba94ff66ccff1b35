use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix4, Point3};

use super::PointCloud;
use crate::{Error, Pose6, Result};

const RECORD: usize = 16;

/// Read a KITTI Velodyne scan: little-endian `f32` records of
/// `(x, y, z, reflectance)`.
pub fn read_velodyne_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_velodyne(&bytes)
}

pub fn parse_velodyne(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::Format(format!(
            "velodyne scan of {} bytes is not a multiple of {RECORD}",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for (index, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let v = [f(0), f(1), f(2), f(3)];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        points.push(Point3::new(v[0] as f64, v[1] as f64, v[2] as f64));
        intensity.push(v[3] as f64);
    }
    Ok(PointCloud {
        points,
        intensity: Some(intensity),
    })
}

/// Serialize to the Velodyne layout. Missing intensity is written as 0.
pub fn velodyne_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD);
    for (i, p) in cloud.points.iter().enumerate() {
        let r = cloud.intensity_at(i).unwrap_or(0.0);
        for v in [p.x, p.y, p.z, r] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_velodyne_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, velodyne_bytes(cloud)).map_err(|e| Error::io(path, e))
}

/// Format like C's `%.9e` (`1.000000000e+00`), the KITTI convention.
fn c_exp(v: f64) -> String {
    let s = format!("{v:.9e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn format_kitti_pose(pose: &Pose6) -> String {
    let m = pose.to_matrix();
    let mut fields = Vec::with_capacity(12);
    for r in 0..3 {
        for c in 0..4 {
            fields.push(c_exp(m[(r, c)]));
        }
    }
    fields.join(" ")
}

pub fn parse_kitti_pose(line: &str) -> Result<Pose6> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number {t:?} in pose line")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != 12 {
        return Err(Error::Format(format!(
            "pose line has {} numbers, expected 12",
            vals.len()
        )));
    }
    let mut m = Matrix4::identity();
    for r in 0..3 {
        for c in 0..4 {
            m[(r, c)] = vals[4 * r + c];
        }
    }
    Ok(Pose6::from_matrix(&m))
}

pub fn read_kitti_poses(path: impl AsRef<Path>) -> Result<Vec<Pose6>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_kitti_pose)
        .collect()
}

pub fn write_kitti_poses(path: impl AsRef<Path>, poses: &[Pose6]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for p in poses {
        writeln!(f, "{}", format_kitti_pose(p)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
