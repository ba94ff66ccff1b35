//! BFGS on six variables with a backtracking Armijo line search.

use nalgebra::{Matrix6, Vector6};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// stop when the gradient norm falls below `g_tol·max(1, |f|)`
    pub g_tol: f64,
    /// stop when the accepted step norm falls below this
    pub x_tol: f64,
    /// length of the very first trial step
    pub initial_step: f64,
    /// fresh starts from a scaled identity after a failed line search
    pub restarts: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            g_tol: 1e-6,
            x_tol: 1e-9,
            initial_step: 0.1,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vector6<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub last_step: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

/// Minimize `f`, which returns value and gradient.
pub fn minimize(mut f: impl FnMut(&Vector6<f64>) -> (f64, Vector6<f64>), x0: Vector6<f64>, cfg: &BfgsConfig) -> BfgsOutcome {
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let fresh = |g: &Vector6<f64>| Matrix6::identity() * (cfg.initial_step / g.norm().max(1e-12));
    let mut hinv = fresh(&g);
    let mut restarts_left = cfg.restarts;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    let small = |g: &Vector6<f64>, f: f64| g.norm() < cfg.g_tol * f.abs().max(1.0);
    let mut converged = small(&g, fx);
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let mut dir = -(hinv * g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = fresh(&g);
            dir = -(hinv * g);
            slope = g.dot(&dir);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        // best plain decrease seen, used when a jump in f defeats Armijo
        let mut fallback: Option<(Vector6<f64>, f64, Vector6<f64>)> = None;
        for _ in 0..MAX_BACKTRACK {
            let xn = x + dir * alpha;
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + ARMIJO_C1 * alpha * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            if fn_ < fallback.as_ref().map_or(fx, |b| b.1) {
                fallback = Some((xn, fn_, gn));
            }
            alpha *= 0.5;
        }
        let accepted = accepted.or(fallback);
        let Some((xn, fn_, gn)) = accepted else {
            // no representable decrease left along the steepest direction
            if -slope <= 1e-14 * fx.abs().max(1.0) {
                converged = true;
                break;
            }
            if restarts_left == 0 {
                // steepest descent finds no decrease at any step above the step tolerance
                converged = (dir * alpha).norm() < cfg.x_tol;
                break;
            }
            restarts_left -= 1;
            hinv = fresh(&g);
            continue;
        };
        let s = xn - x;
        let y = gn - g;
        last_step = s.norm();
        x = xn;
        fx = fn_;
        g = gn;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if iterations == 1 {
                // rescale the initial guess before the first update
                hinv = Matrix6::identity() * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let i = Matrix6::identity();
            let a = i - s * y.transpose() * rho;
            hinv = a * hinv * a.transpose() + s * s.transpose() * rho;
        }
        converged = small(&g, fx) || last_step < cfg.x_tol;
    }
    BfgsOutcome {
        x,
        f: fx,
        grad_norm: g.norm(),
        last_step,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let centre = Vector6::new(1.0, -2.0, 0.5, 3.0, 0.0, -1.0);
        let scales = Vector6::new(1.0, 10.0, 0.1, 5.0, 2.0, 1.0);
        let out = minimize(
            |x| {
                let d = x - centre;
                let g = d.component_mul(&scales) * 2.0;
                (d.component_mul(&d).dot(&scales), g)
            },
            Vector6::zeros(),
            &BfgsConfig {
                max_iter: 200,
                g_tol: 1e-10,
                ..BfgsConfig::default()
            },
        );
        assert!(out.converged);
        assert!((out.x - centre).norm() < 1e-8);
    }

    #[test]
    fn rosenbrock_pairs() {
        let out = minimize(
            |x| {
                let mut f = 0.0;
                let mut g = Vector6::zeros();
                for k in (0..6).step_by(2) {
                    let (a, b) = (x[k], x[k + 1]);
                    f += (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                    g[k] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                    g[k + 1] = 200.0 * (b - a * a);
                }
                (f, g)
            },
            Vector6::from_element(-0.5),
            &BfgsConfig {
                max_iter: 500,
                g_tol: 1e-9,
                ..BfgsConfig::default()
            },
        );
        assert!(out.converged);
        assert!((out.x - Vector6::from_element(1.0)).norm() < 1e-6);
    }

    #[test]
    fn starts_converged_at_optimum() {
        let out = minimize(|x| (x.norm_squared(), x * 2.0), Vector6::zeros(), &BfgsConfig::default());
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }
}
