use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};

use super::{DepthImage, PointCloud};
use crate::{Error, Pose6, Result};

/// Pinhole intrinsics plus the LiDAR-to-camera extrinsic.
///
/// Pixel `(col, row)` has its center at `u = col`, `v = row`; a camera-frame
/// point `(x, y, z)` with `z > 0` lands at `u = fx·x/z + cx`, `v = fy·y/z + cy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub extrinsic: Pose6,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, extrinsic: Pose6) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            extrinsic,
        })
    }

    /// Extrinsic for a camera at the LiDAR origin looking along the LiDAR
    /// `+x` axis: LiDAR (x fwd, y left, z up) to camera (x right, y down,
    /// z fwd).
    pub fn forward_extrinsic() -> Pose6 {
        let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        Pose6::from_rotation_translation(&r, &Vector3::zeros())
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        self.extrinsic.apply(p)
    }

    /// Ray direction (camera frame, unit z) through a pixel center.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Vector3<f64> {
        Vector3::new(
            (col as f64 - self.cx) / self.fx,
            (row as f64 - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Camera intrinsics together with an image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intr: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Parse the `key = value` camera file (`fx`, `fy`, `cx`, `cy`, `width`,
    /// `height`, optional `extrinsic = tx ty tz roll pitch yaw`; default is
    /// [`CameraIntrinsics::forward_extrinsic`]).
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("camera line {}: expected key = value", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| Error::Format(format!("camera file lacks {k}")))?
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("camera {k} is not a number")))
        };
        let extrinsic = match kv.get("extrinsic") {
            Some(v) => {
                let vals: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| Error::Format(format!("bad extrinsic value {t:?}"))))
                    .collect::<Result<_>>()?;
                let arr: [f64; 6] = vals
                    .try_into()
                    .map_err(|_| Error::Format("extrinsic needs 6 numbers".into()))?;
                Pose6::from_array(arr)
            }
            None => CameraIntrinsics::forward_extrinsic(),
        };
        for k in kv.keys() {
            if !["fx", "fy", "cx", "cy", "width", "height", "extrinsic"].contains(&k.as_str()) {
                return Err(Error::Format(format!("unknown camera key {k:?}")));
            }
        }
        let intr = CameraIntrinsics::new(num("fx")?, num("fy")?, num("cx")?, num("cy")?, extrinsic)?;
        let width = num("width")? as usize;
        let height = num("height")? as usize;
        if width == 0 || height == 0 {
            return Err(Error::Format("camera width and height must be positive".into()));
        }
        Ok(Self {
            intr,
            width,
            height,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let e = self.intr.extrinsic;
        format!(
            "fx = {}\nfy = {}\ncx = {}\ncy = {}\nwidth = {}\nheight = {}\nextrinsic = {} {} {} {} {} {}\n",
            self.intr.fx,
            self.intr.fy,
            self.intr.cx,
            self.intr.cy,
            self.width,
            self.height,
            e.t_x,
            e.t_y,
            e.t_z,
            e.phi_x,
            e.phi_y,
            e.phi_z
        )
    }

    /// Forward-looking camera whose rows span the elevation range
    /// `[elev_min_deg, elev_max_deg]` and whose columns span `±half_fov_deg`.
    pub fn forward_looking(
        width: usize,
        height: usize,
        half_fov_deg: f64,
        elev_min_deg: f64,
        elev_max_deg: f64,
    ) -> Result<Self> {
        let fx = (width as f64 - 1.0) / 2.0 / half_fov_deg.to_radians().tan();
        let top = elev_max_deg.to_radians().tan();
        let bottom = (-elev_min_deg).to_radians().tan();
        let fy = (height as f64 - 1.0) / (top + bottom);
        let cy = fy * top;
        let cx = (width as f64 - 1.0) / 2.0;
        let intr = CameraIntrinsics::new(fx, fy, cx, cy, CameraIntrinsics::forward_extrinsic())?;
        Ok(Self {
            intr,
            width,
            height,
        })
    }
}

/// A projected depth image together with the number of points that fell
/// outside the frustum.
#[derive(Debug, Clone)]
pub struct Projection {
    pub image: DepthImage,
    pub dropped: usize,
    /// For each pixel, the index of the point that won it.
    pub source: Vec<Option<usize>>,
}

fn pixel_of(intr: &CameraIntrinsics, c: &Vector3<f64>, width: usize, height: usize) -> Option<usize> {
    if c.z <= 0.0 {
        return None;
    }
    let u = (intr.fx * c.x / c.z + intr.cx).round();
    let v = (intr.fy * c.y / c.z + intr.cy).round();
    (u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64).then(|| v as usize * width + u as usize)
}

impl Camera {
    /// Row-major pixel index a LiDAR-frame point projects to, if any.
    pub fn pixel(&self, p: &Point3<f64>) -> Option<usize> {
        let c = self.intr.to_camera(p);
        pixel_of(&self.intr, &c.coords, self.width, self.height)
    }
}

/// Project a LiDAR-frame cloud onto the image plane; the nearest point
/// wins each pixel.
pub fn project_to_depth(
    cloud: &PointCloud,
    intr: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> Result<Projection> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    let mut image = DepthImage::empty(width, height);
    let mut source = vec![None; width * height];
    let mut dropped = 0;
    let r = intr.extrinsic.rotation();
    let t = intr.extrinsic.translation();
    for (i, p) in cloud.points.iter().enumerate() {
        let c = r * p.coords + t;
        let Some(idx) = pixel_of(intr, &c, width, height) else {
            dropped += 1;
            continue;
        };
        if image.mask[idx] == 0 || c.z < image.depth[idx] {
            image.depth[idx] = c.z;
            image.mask[idx] = 1;
            source[idx] = Some(i);
        }
    }
    Ok(Projection {
        image,
        dropped,
        source,
    })
}

/// Unproject every valid pixel through the pinhole model back into the
/// LiDAR frame. Points come out in row-major pixel order.
pub fn depth_to_cloud(img: &DepthImage, intr: &CameraIntrinsics) -> PointCloud {
    let inv = intr.extrinsic.inverse();
    let r = inv.rotation();
    let t = inv.translation();
    let mut points = Vec::with_capacity(img.valid_count());
    for row in 0..img.height {
        for col in 0..img.width {
            if let Some(d) = img.get(row, col) {
                let c = intr.pixel_ray(row, col) * d;
                points.push(Point3::from(r * c + t));
            }
        }
    }
    PointCloud::new(points)
}
