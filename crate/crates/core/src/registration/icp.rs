use nalgebra::{Matrix3, Point3, Vector3};

use super::kdtree::KdTree;
use super::{Pose6, RegistrationResult};
use crate::{Error, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iter: usize,
    /// stop once the pose changes by less than this between iterations
    /// (translation meters plus rotation radians)
    pub tol: f64,
    /// pairs farther apart than this are ignored; infinite keeps all
    pub max_correspondence: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            max_correspondence: f64::INFINITY,
        }
    }
}

/// Least-squares rigid motion taking `src[i]` onto `dst[i]` (Kabsch).
pub fn procrustes(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<Pose6> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!("{} sources, {} targets", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("{} correspondences", src.len())));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[1] <= 1e-12 * sv[0].max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("correspondences are collinear".into()));
    }
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let mut fix = Matrix3::identity();
    fix[(2, 2)] = (v * u.transpose()).determinant().signum();
    let r = v * fix * u.transpose();
    let t = cd - r * cs;
    Ok(Pose6::from_rotation_translation(&r, &t))
}

fn pose_change(a: &Pose6, b: &Pose6) -> f64 {
    let d = a.inverse().compose(b);
    d.translation_norm() + d.rotation_angle()
}

/// Point-to-point ICP. The result pose maps `input` into the frame of
/// `reference`; the score is the mean squared pair distance.
pub fn icp_register(input: &PointCloud, reference: &PointCloud, init: &Pose6, cfg: &IcpConfig) -> Result<RegistrationResult> {
    if input.len() < 3 || reference.len() < 3 {
        return Err(Error::Degenerate(format!(
            "ICP needs 3 points per cloud, got {} and {}",
            input.len(),
            reference.len()
        )));
    }
    let tree = KdTree::build(&reference.points);
    let max_d2 = cfg.max_correspondence * cfg.max_correspondence;
    let mut pose = *init;
    let mut iterations = 0;
    let mut converged = false;
    let mut src = Vec::with_capacity(input.len());
    let mut dst = Vec::with_capacity(input.len());
    while iterations < cfg.max_iter {
        iterations += 1;
        src.clear();
        dst.clear();
        for p in &input.points {
            let (j, d2) = tree.nearest(&pose.apply(p)).expect("non-empty tree");
            if d2 <= max_d2 {
                src.push(*p);
                dst.push(reference.points[j]);
            }
        }
        let next = procrustes(&src, &dst)?;
        let change = pose_change(&pose, &next);
        pose = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let mut se = 0.0;
    let mut count = 0usize;
    for p in &input.points {
        let (_, d2) = tree.nearest(&pose.apply(p)).expect("non-empty tree");
        if d2 <= max_d2 {
            se += d2;
            count += 1;
        }
    }
    Ok(RegistrationResult {
        pose,
        iterations,
        final_score: if count > 0 { se / count as f64 } else { f64::INFINITY },
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)))
                .collect(),
        )
    }

    fn transform(c: &PointCloud, p: &Pose6) -> PointCloud {
        PointCloud::new(c.points.iter().map(|q| p.apply(q)).collect())
    }

    fn pose_err(a: &Pose6, b: &Pose6) -> f64 {
        pose_change(a, b)
    }

    #[test]
    fn identity_on_same_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cloud(&mut rng, 200);
        let r = icp_register(&c, &c, &Pose6::identity(), &IcpConfig::default()).unwrap();
        assert!(pose_err(&r.pose, &Pose6::identity()) < 1e-12);
        assert!(r.final_score <= 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn recovers_small_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_cloud(&mut rng, 400);
        let truth = Pose6::new(0.2, -0.15, 0.1, 0.02, -0.03, 0.05);
        let r = icp_register(&c, &transform(&c, &truth), &Pose6::identity(), &IcpConfig::default()).unwrap();
        assert!(pose_err(&r.pose, &truth) < 1e-6, "{}", r.pose);
    }

    #[test]
    fn three_points_match_closed_form() {
        let src = [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 2.0, 0.0)];
        let truth = Pose6::new(0.5, 0.25, -1.0, 0.3, -0.2, 1.1);
        let dst: Vec<Point3<f64>> = src.iter().map(|p| truth.apply(p)).collect();
        let cfg = IcpConfig {
            max_iter: 1,
            ..IcpConfig::default()
        };
        // with three exact pairs the closed form is the rotation that maps
        // the source triad frame onto the target triad frame
        let frame = |p: &[Point3<f64>]| {
            let a = (p[1] - p[0]).normalize();
            let b = (p[2] - p[0]).cross(&a).normalize();
            let c = a.cross(&b);
            Matrix3::from_columns(&[a, b, c])
        };
        let (fs, fd) = (frame(&src), frame(&dst));
        let r = fd * fs.transpose();
        let cs = (src[0].coords + src[1].coords + src[2].coords) / 3.0;
        let cd = (dst[0].coords + dst[1].coords + dst[2].coords) / 3.0;
        let expected = Pose6::from_rotation_translation(&r, &(cd - r * cs));
        let got = procrustes(&src, &dst).unwrap();
        assert!(pose_err(&got, &expected) < 1e-12);
        assert!(pose_err(&got, &truth) < 1e-12);
        // seeded at the answer, the first pass pairs each point with its image
        let icp = icp_register(
            &PointCloud::new(src.to_vec()),
            &PointCloud::new(dst.clone()),
            &truth,
            &cfg,
        )
        .unwrap();
        assert_eq!(icp.iterations, 1);
        assert!(pose_err(&icp.pose, &expected) < 1e-12);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<Point3<f64>> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let c = PointCloud::new(pts);
        assert!(matches!(
            icp_register(&c, &c, &Pose6::identity(), &IcpConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn equivariant_under_common_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_cloud(&mut rng, 300);
        let truth = Pose6::new(0.1, 0.2, -0.1, 0.01, 0.02, -0.04);
        let reference = transform(&c, &truth);
        let g = Pose6::new(3.0, -1.0, 0.5, 0.3, -0.1, 1.0);
        let a = icp_register(&c, &reference, &Pose6::identity(), &IcpConfig::default()).unwrap();
        let b = icp_register(&transform(&c, &g), &transform(&reference, &g), &Pose6::identity(), &IcpConfig::default()).unwrap();
        let conj = g.compose(&a.pose).compose(&g.inverse());
        assert!(pose_err(&b.pose, &conj) < 1e-6);
    }
}
