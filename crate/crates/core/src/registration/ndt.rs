use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3, Vector6};

use super::bfgs::{self, BfgsConfig};
use super::{rotation_derivatives, rotation_from_euler, Pose6, RegistrationResult};
use crate::{Error, PointCloud, Result};

/// Integer cell coordinates.
pub type CellIndex = [i64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCell {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub inv_covariance: Matrix3<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdtGrid {
    pub cell_size: f64,
    /// smallest eigenvalue allowed in any covariance
    pub floor: f64,
    pub cells: BTreeMap<CellIndex, GaussianCell>,
}

impl NdtGrid {
    pub fn cell_index(&self, p: &Point3<f64>) -> CellIndex {
        cell_of(p, self.cell_size)
    }

    pub fn cell(&self, p: &Point3<f64>) -> Option<&GaussianCell> {
        self.cells.get(&self.cell_index(p))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn cell_of(p: &Point3<f64>, size: f64) -> CellIndex {
    [
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    ]
}

/// Eigenvalue floor used by [`build_ndt`] for a given cell size.
pub fn covariance_floor(cell_size: f64) -> f64 {
    1e-3 * cell_size * cell_size
}

/// Voxelize `cloud` and fit a Gaussian (divisor `n`) to every cell holding
/// at least `min_points` points. Covariance eigenvalues are raised to
/// [`covariance_floor`].
pub fn build_ndt(cloud: &PointCloud, cell_size: f64, min_points: usize) -> Result<NdtGrid> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::InvalidArgument(format!("cell size {cell_size}")));
    }
    if min_points < 3 {
        return Err(Error::InvalidArgument(format!("min_points {min_points} < 3")));
    }
    let mut buckets: BTreeMap<CellIndex, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        buckets.entry(cell_of(p, cell_size)).or_default().push(i);
    }
    let floor = covariance_floor(cell_size);
    let mut cells = BTreeMap::new();
    for (idx, members) in buckets {
        if members.len() < min_points {
            continue;
        }
        let n = members.len() as f64;
        let mean = members.iter().fold(Vector3::zeros(), |a, &i| a + cloud.points[i].coords) / n;
        let mut cov = Matrix3::zeros();
        for &i in &members {
            let d = cloud.points[i].coords - mean;
            cov += d * d.transpose();
        }
        cov /= n;
        let eig = SymmetricEigen::new(cov);
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let vecs = eig.eigenvectors;
        let covariance = symmetrize(vecs * Matrix3::from_diagonal(&vals) * vecs.transpose());
        let inv_covariance = symmetrize(vecs * Matrix3::from_diagonal(&vals.map(|v| 1.0 / v)) * vecs.transpose());
        cells.insert(
            idx,
            GaussianCell {
                mean,
                covariance,
                inv_covariance,
                count: members.len(),
            },
        );
    }
    Ok(NdtGrid {
        cell_size,
        floor,
        cells,
    })
}

fn symmetrize(m: Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// `Σ exp(−½ dᵀΣ⁻¹d)` over scan points moved by `pose`, each against the
/// Gaussian of the cell it lands in.
pub fn ndt_score(pose: &Pose6, scan: &PointCloud, grid: &NdtGrid) -> f64 {
    let r = pose.rotation();
    let t = pose.translation();
    let mut s = 0.0;
    for p in &scan.points {
        let x = Point3::from(r * p.coords + t);
        if let Some(c) = grid.cell(&x) {
            let d = x.coords - c.mean;
            s += (-0.5 * d.dot(&(c.inv_covariance * d))).exp();
        }
    }
    s
}

/// Score and its gradient with respect to
/// `(t_x, t_y, t_z, roll, pitch, yaw)`, taken at raw (unnormalized) angles.
pub fn ndt_score_gradient(x: &Vector6<f64>, scan: &PointCloud, grid: &NdtGrid) -> (f64, Vector6<f64>) {
    let r = rotation_from_euler(x[3], x[4], x[5]);
    let dr = rotation_derivatives(x[3], x[4], x[5]);
    let t = Vector3::new(x[0], x[1], x[2]);
    let mut s = 0.0;
    let mut g = Vector6::zeros();
    for p in &scan.points {
        let y = r * p.coords + t;
        let Some(c) = grid.cell(&Point3::from(y)) else {
            continue;
        };
        let d = y - c.mean;
        let sd = c.inv_covariance * d;
        let e = (-0.5 * d.dot(&sd)).exp();
        s += e;
        // ∂e/∂y = −e·Σ⁻¹d
        let gy = -e * sd;
        g[0] += gy.x;
        g[1] += gy.y;
        g[2] += gy.z;
        for j in 0..3 {
            g[3 + j] += gy.dot(&(dr[j] * p.coords));
        }
    }
    (s, g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdtConfig {
    pub cell_size: f64,
    pub min_points: usize,
    pub max_iter: usize,
    pub g_tol: f64,
    pub x_tol: f64,
    /// run a first pass on this larger grid and start the fine pass from
    /// its result
    pub coarse_cell_size: Option<f64>,
}

impl Default for NdtConfig {
    fn default() -> Self {
        Self {
            cell_size: 1.0,
            min_points: 5,
            max_iter: 50,
            g_tol: 1e-4,
            x_tol: 1e-7,
            coarse_cell_size: None,
        }
    }
}

/// Register against a grid that has already been built.
pub fn ndt_register_grid(input: &PointCloud, grid: &NdtGrid, init: &Pose6, cfg: &NdtConfig) -> Result<RegistrationResult> {
    if grid.is_empty() {
        return Err(Error::Degenerate("reference has no populated NDT cell".into()));
    }
    if input.is_empty() {
        return Err(Error::Degenerate("input cloud is empty".into()));
    }
    let x0 = Vector6::from(init.to_array());
    let out = bfgs::minimize(
        |x| {
            let (s, g) = ndt_score_gradient(x, input, grid);
            (-s, -g)
        },
        x0,
        &BfgsConfig {
            max_iter: cfg.max_iter,
            g_tol: cfg.g_tol,
            x_tol: cfg.x_tol,
            ..BfgsConfig::default()
        },
    );
    Ok(RegistrationResult {
        pose: Pose6::from_array(out.x.into()),
        iterations: out.iterations,
        final_score: out.f,
        converged: out.converged,
    })
}

/// NDT registration of `input` onto `reference` by BFGS on the negative
/// score. The result pose maps `input` into the reference frame.
pub fn ndt_register(input: &PointCloud, reference: &PointCloud, init: &Pose6, cfg: &NdtConfig) -> Result<RegistrationResult> {
    let mut start = *init;
    let mut coarse_iters = 0;
    if let Some(size) = cfg.coarse_cell_size {
        let grid = build_ndt(reference, size, cfg.min_points)?;
        let r = ndt_register_grid(input, &grid, init, cfg)?;
        start = r.pose;
        coarse_iters = r.iterations;
    }
    let grid = build_ndt(reference, cfg.cell_size, cfg.min_points)?;
    let mut r = ndt_register_grid(input, &grid, &start, cfg)?;
    r.iterations += coarse_iters;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn three_point_cell() {
        let g = build_ndt(&cloud(&[[0.1, 0.5, 0.5], [0.9, 0.5, 0.5], [0.5, 0.5, 0.5]]), 1.0, 3).unwrap();
        let c = g.cells.get(&[0, 0, 0]).unwrap();
        assert!((c.mean - Vector3::new(0.5, 0.5, 0.5)).norm() < 1e-15);
        // before the floor Σ₁₁ = (0.16+0.16)/3; off-axis entries are floored
        assert!((c.covariance[(0, 0)] - 0.32 / 3.0).abs() < 1e-12);
        assert!((c.covariance[(1, 1)] - g.floor).abs() < 1e-15);
        assert!(c.covariance[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn documented_cell_example() {
        // points (0,0,0), (2,0,0), (1,0,0) with a 4 m cell
        let g = build_ndt(&cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), 4.0, 3).unwrap();
        let c = g.cells.values().next().unwrap();
        assert!((c.mean - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((c.covariance[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_get_floor() {
        let g = build_ndt(&cloud(&[[0.3, 0.3, 0.3]; 6]), 0.5, 5).unwrap();
        let c = g.cells.values().next().unwrap();
        assert!((c.covariance - Matrix3::identity() * covariance_floor(0.5)).norm() < 1e-15);
    }

    #[test]
    fn sparse_cells_dropped() {
        let g = build_ndt(&cloud(&[[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]]), 1.0, 3).unwrap();
        assert!(g.is_empty());
        assert!(build_ndt(&cloud(&[]), 1.0, 2).is_err());
        assert!(build_ndt(&cloud(&[]), 0.0, 3).is_err());
    }

    #[test]
    fn score_at_mean_is_one() {
        let g = build_ndt(&cloud(&[[0.1, 0.5, 0.5], [0.9, 0.5, 0.5], [0.5, 0.2, 0.5], [0.5, 0.8, 0.5], [0.5, 0.5, 0.1]]), 1.0, 5).unwrap();
        let mean = g.cells.values().next().unwrap().mean;
        let s = ndt_score(&Pose6::identity(), &PointCloud::new(vec![Point3::from(mean)]), &g);
        assert_eq!(s, 1.0);
        let away = Pose6::new(10.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(ndt_score(&away, &PointCloud::new(vec![Point3::from(mean)]), &g), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3<f64>> = (0..400)
            .map(|_| Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-0.5..0.5)))
            .collect();
        let c = PointCloud::new(pts);
        let g = build_ndt(&c, 1.0, 5).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let x = Vector6::from_fn(|i, _| if i < 3 { rng.random_range(-0.3..0.3) } else { rng.random_range(-0.1..0.1) });
            let h = 1e-6;
            let memb = |x: &Vector6<f64>| -> Vec<CellIndex> {
                let p = Pose6::from_array((*x).into());
                c.points.iter().map(|q| g.cell_index(&p.apply(q))).collect()
            };
            let base = memb(&x);
            let (_, an) = ndt_score_gradient(&x, &c, &g);
            let mut ok = true;
            let mut worst: f64 = 0.0;
            for i in 0..6 {
                let mut up = x;
                up[i] += h;
                let mut dn = x;
                dn[i] -= h;
                if memb(&up) != base || memb(&dn) != base {
                    ok = false;
                    break;
                }
                let num = (ndt_score_gradient(&up, &c, &g).0 - ndt_score_gradient(&dn, &c, &g).0) / (2.0 * h);
                worst = worst.max((num - an[i]).abs() / an[i].abs().max(num.abs()).max(1e-3));
            }
            if ok {
                assert!(worst < 1e-5, "relative error {worst}");
                checked += 1;
            }
        }
    }

    #[test]
    fn registers_identity_on_symmetric_cells() {
        // every cell holds a lattice centred on its middle, so identity is a
        // stationary point of the score
        let mut pts = Vec::new();
        for cx in 0..4 {
            for cy in 0..3 {
                for (i, j, k) in [(0.2, 0.5, 0.5), (0.8, 0.5, 0.5), (0.5, 0.3, 0.5), (0.5, 0.7, 0.5), (0.5, 0.5, 0.45), (0.5, 0.5, 0.55)] {
                    pts.push(Point3::new(cx as f64 + i, cy as f64 + j, k));
                }
            }
        }
        let c = PointCloud::new(pts);
        let r = ndt_register(&c, &c, &Pose6::identity(), &NdtConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.pose.translation_norm() < 1e-6 && r.pose.rotation_angle() < 1e-6, "{}", r.pose);
    }

    #[test]
    fn registers_identity_on_surfaces() {
        // random surface samples: identity is only approximately optimal
        // because the exponential weights are not symmetric within a cell
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3<f64>> = (0..3000)
            .map(|_| {
                let u: f64 = rng.random_range(-6.0..6.0);
                let v: f64 = rng.random_range(-6.0..6.0);
                match rng.random_range(0..3) {
                    0 => Point3::new(u, v, 0.37),
                    1 => Point3::new(u, 4.41, v.abs() * 0.5),
                    _ => Point3::new(3.23, u, v.abs() * 0.5),
                }
            })
            .collect();
        let c = PointCloud::new(pts);
        let r = ndt_register(&c, &c, &Pose6::identity(), &NdtConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.pose.translation_norm() < 2e-3 && r.pose.rotation_angle() < 2e-4, "{}", r.pose);
    }
}
