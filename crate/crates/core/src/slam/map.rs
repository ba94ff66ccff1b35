use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::{Error, PointCloud, Result};

pub const DEFAULT_VOXEL_SIZE: f64 = 0.2;

/// Accumulated world-frame points, voxel filtered when `voxel_size > 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldMap {
    pub points: PointCloud,
    pub voxel_size: f64,
}

impl WorldMap {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Replace the points in each occupied cube of side `size` by their
/// centroid. Output is ordered by voxel index.
pub fn voxel_filter(cloud: &PointCloud, size: f64) -> Result<PointCloud> {
    if !(size > 0.0 && size.is_finite()) {
        return Err(Error::InvalidArgument(format!("voxel size {size} must be positive")));
    }
    let mut cells: BTreeMap<[i64; 3], (Vector3<f64>, f64, usize)> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = [
            (p.x / size).floor() as i64,
            (p.y / size).floor() as i64,
            (p.z / size).floor() as i64,
        ];
        let e = cells.entry(key).or_insert((Vector3::zeros(), 0.0, 0));
        e.0 += p.coords;
        e.1 += cloud.intensity_at(i).unwrap_or(0.0);
        e.2 += 1;
    }
    let n = cells.len();
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for (sum, isum, count) in cells.into_values() {
        points.push(Point3::from(sum / count as f64));
        intensity.push(isum / count as f64);
    }
    Ok(PointCloud {
        points,
        intensity: cloud.intensity.is_some().then_some(intensity),
    })
}

/// ASCII PLY with `x y z` and, when present, `intensity`, nine
/// significant digits per value.
pub fn export_map(map: &WorldMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let cloud = &map.points;
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len()).map_err(io)?;
    writeln!(w, "property double x\nproperty double y\nproperty double z").map_err(io)?;
    if cloud.intensity.is_some() {
        writeln!(w, "property double intensity").map_err(io)?;
    }
    writeln!(w, "end_header").map_err(io)?;
    for (i, p) in cloud.points.iter().enumerate() {
        write!(w, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z).map_err(io)?;
        if let Some(v) = cloud.intensity_at(i) {
            write!(w, " {v:.8e}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read an ASCII PLY vertex list (`x`, `y`, `z`, optional `intensity`;
/// other vertex properties are skipped).
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text)
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Format("missing ply magic".into()));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = lines.next().ok_or_else(|| Error::Format("PLY header never ends".into()))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", f, _] => return Err(Error::Format(format!("unsupported PLY format {f}"))),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::Format(format!("bad vertex count {n:?}")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(Error::Format(format!("unexpected PLY header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::Format("PLY vertices lack x, y or z".into())),
    };
    let ii = col("intensity");
    let mut points = Vec::with_capacity(count);
    let mut intensity = Vec::new();
    for k in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("PLY ends after {k} of {count} vertices")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number {t:?} in vertex {k}"))))
            .collect::<Result<_>>()?;
        if vals.len() != props.len() {
            return Err(Error::Format(format!("vertex {k} has {} values, expected {}", vals.len(), props.len())));
        }
        points.push(Point3::new(vals[xi], vals[yi], vals[zi]));
        if let Some(i) = ii {
            intensity.push(vals[i]);
        }
    }
    Ok(PointCloud {
        points,
        intensity: ii.map(|_| intensity),
    })
}
