use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};

/// Rigid transform `[t_x t_y t_z φ_x φ_y φ_z]`.
///
/// The rotation is `R = Rz(φ_z) · Ry(φ_y) · Rx(φ_x)` (yaw, pitch, roll
/// applied intrinsically) and a point maps as `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6 {
    pub t_x: f64,
    pub t_y: f64,
    pub t_z: f64,
    pub phi_x: f64,
    pub phi_y: f64,
    pub phi_z: f64,
}

impl Default for Pose6 {
    fn default() -> Self {
        Self::identity()
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

impl Pose6 {
    pub const fn identity() -> Self {
        Self {
            t_x: 0.0,
            t_y: 0.0,
            t_z: 0.0,
            phi_x: 0.0,
            phi_y: 0.0,
            phi_z: 0.0,
        }
    }

    pub fn new(t_x: f64, t_y: f64, t_z: f64, phi_x: f64, phi_y: f64, phi_z: f64) -> Self {
        Self {
            t_x,
            t_y,
            t_z,
            phi_x: normalize_angle(phi_x),
            phi_y: normalize_angle(phi_y),
            phi_z: normalize_angle(phi_z),
        }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    /// Raw parameter vector; angles are not renormalized.
    pub fn to_array(&self) -> [f64; 6] {
        [self.t_x, self.t_y, self.t_z, self.phi_x, self.phi_y, self.phi_z]
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.t_x, self.t_y, self.t_z)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_euler(self.phi_x, self.phi_y, self.phi_z)
    }

    pub fn from_rotation_translation(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        let (roll, pitch, yaw) = euler_from_rotation(r);
        Self::new(t.x, t.y, t.z, roll, pitch, yaw)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation());
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::from_rotation_translation(&r, &t)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose6) -> Pose6 {
        let r = self.rotation() * other.rotation();
        let t = self.rotation() * other.translation() + self.translation();
        Self::from_rotation_translation(&r, &t)
    }

    pub fn inverse(&self) -> Pose6 {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        Self::from_rotation_translation(&rt, &t)
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation() * p.coords + self.translation())
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation().norm()
    }

    /// Angle of the rotation part, in radians.
    pub fn rotation_angle(&self) -> f64 {
        // atan2 keeps precision for tiny angles where acos of the trace does not
        let r = self.rotation();
        let sin = 0.5
            * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
        sin.atan2((r.trace() - 1.0) / 2.0)
    }
}

impl fmt::Display for Pose6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            self.t_x, self.t_y, self.t_z, self.phi_x, self.phi_y, self.phi_z
        )
    }
}

pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Inverse of [`rotation_from_euler`]; returns `(roll, pitch, yaw)`.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    if r[(2, 0)].abs() < 1.0 - 1e-12 {
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        (roll, pitch, yaw)
    } else {
        // gimbal lock: fold everything into yaw
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        (0.0, pitch, yaw)
    }
}

/// Partial derivatives of `R(roll, pitch, yaw)` with respect to each angle.
pub fn rotation_derivatives(roll: f64, pitch: f64, yaw: f64) -> [Matrix3<f64>; 3] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    let dry = Matrix3::new(-sp, 0.0, cp, 0.0, 0.0, 0.0, -cp, 0.0, -sp);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sr, -cr, 0.0, cr, -sr);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}
