//! Quasi-Newton minimization with finite-difference derivatives, numeric
//! Hessians and a golden-section line maximizer.
//!
//! Objectives are sums of parts that each depend on a subset of the
//! parameters, so derivatives only perturb what a part actually reads.

use nalgebra::{DMatrix, DVector};

/// Relative step of the central-difference gradient.
const GRADIENT_STEP: f64 = 1e-5;
/// Relative step of the central-difference Hessian.
const HESSIAN_STEP: f64 = 1e-3;

pub(crate) struct Objective<'a> {
    pub parts: Vec<Vec<usize>>,
    pub eval: &'a dyn Fn(usize, &[f64]) -> f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when the predicted decrease `gᵀ H g / 2` falls below this.
    pub tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iterations: 500, tolerance: 1e-8 }
    }
}

fn step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

impl Objective<'_> {
    fn parts_at(&self, x: &[f64]) -> Vec<f64> {
        (0..self.parts.len()).map(|p| (self.eval)(p, x)).collect()
    }

    /// Central-difference gradient and the diagonal curvature that comes
    /// for free from the same evaluations.
    fn gradient(&self, x: &[f64], at: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut g = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut y = x.to_vec();
        for (p, idx) in self.parts.iter().enumerate() {
            for &i in idx {
                let h = step(x[i], GRADIENT_STEP);
                y[i] = x[i] + h;
                let up = (self.eval)(p, &y);
                y[i] = x[i] - h;
                let dn = (self.eval)(p, &y);
                y[i] = x[i];
                g[i] += (up - dn) / (2.0 * h);
                d[i] += (up - 2.0 * at[p] + dn) / (h * h);
            }
        }
        (g, d)
    }

    pub fn minimize(&self, x0: &[f64], opts: &BfgsOptions) -> Minimum {
        let n = x0.len();
        let mut x = x0.to_vec();
        let parts = self.parts_at(&x);
        let mut f: f64 = parts.iter().sum();
        if !f.is_finite() {
            return Minimum { x, value: f, iterations: 0, converged: false };
        }
        let (g0, d0) = self.gradient(&x, &parts);
        let mut g = DVector::from_vec(g0);
        let diag_inverse = |d: &[f64]| {
            DMatrix::from_diagonal(&DVector::from_iterator(n, d.iter().map(|&v| if v > 1e-8 { 1.0 / v } else { 1.0 })))
        };
        let mut h = diag_inverse(&d0);
        let mut curvature = d0;
        let mut fresh = true;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iterations {
            let decrement = 0.5 * g.dot(&(&h * &g));
            if decrement < opts.tolerance {
                converged = true;
                break;
            }
            let dir = -(&h * &g);
            let slope = g.dot(&dir);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + alpha * b).collect();
                let tp = self.parts_at(&trial);
                let ft: f64 = tp.iter().sum();
                if ft.is_finite() && ft <= f + 1e-4 * alpha * slope {
                    accepted = Some((trial, tp, ft));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((xn, pn, fnew)) = accepted else {
                if fresh {
                    break;
                }
                h = diag_inverse(&curvature);
                fresh = true;
                continue;
            };
            iterations += 1;
            let (gn, dn) = self.gradient(&xn, &pn);
            let gn = DVector::from_vec(gn);
            let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
            let yv = &gn - &g;
            let sy = s.dot(&yv);
            if sy > 1e-12 * s.norm() * yv.norm() {
                let rho = 1.0 / sy;
                let hy = &h * &yv;
                let yhy = yv.dot(&hy);
                h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            }
            x = xn;
            f = fnew;
            g = gn;
            curvature = dn;
            fresh = false;
        }
        if !converged {
            converged = 0.5 * g.dot(&(&h * &g)) < opts.tolerance;
        }
        Minimum { x, value: f, iterations, converged }
    }

    /// Central-difference Hessian, symmetric by construction. The error names
    /// the first entry that is not finite.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>, (usize, usize)> {
        let n = x.len();
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let mut y = x.to_vec();
        for (p, idx) in self.parts.iter().enumerate() {
            let f0 = (self.eval)(p, x);
            let f = |y: &[f64]| (self.eval)(p, y);
            for (a, &i) in idx.iter().enumerate() {
                let hi = step(x[i], HESSIAN_STEP);
                y[i] = x[i] + hi;
                let up = f(&y);
                y[i] = x[i] - hi;
                let dn = f(&y);
                y[i] = x[i];
                hess[(i, i)] += (up - 2.0 * f0 + dn) / (hi * hi);
                for &j in &idx[..a] {
                    let hj = step(x[j], HESSIAN_STEP);
                    let mut corner = |si: f64, sj: f64| {
                        y[i] = x[i] + si * hi;
                        y[j] = x[j] + sj * hj;
                        let v = f(&y);
                        y[i] = x[i];
                        y[j] = x[j];
                        v
                    };
                    let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                        / (4.0 * hi * hj);
                    hess[(i, j)] += v;
                    hess[(j, i)] += v;
                }
            }
        }
        for i in 0..n {
            for j in 0..=i {
                if !hess[(i, j)].is_finite() {
                    return Err((i, j));
                }
            }
        }
        Ok(hess)
    }
}

/// Maximizer of a unimodal function on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_minimum() {
        let eval = |_: usize, x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let obj = Objective { parts: vec![vec![0, 1]], eval: &eval };
        let m = obj.minimize(&[-1.2, 1.0], &BfgsOptions { max_iterations: 500, tolerance: 1e-14 });
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn split_parts_sum() {
        // f = (x0 - 1)^2 + (x1 + 2)^2 + x0 x1, split by variable use
        let eval = |p: usize, x: &[f64]| match p {
            0 => (x[0] - 1.0).powi(2),
            1 => (x[1] + 2.0).powi(2),
            _ => x[0] * x[1],
        };
        let obj = Objective { parts: vec![vec![0], vec![1], vec![0, 1]], eval: &eval };
        let h = obj.hessian(&[0.3, -0.7]).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-8);
        assert!((h[(1, 1)] - 2.0).abs() < 1e-8);
        assert!((h[(0, 1)] - 1.0).abs() < 1e-8);
        let m = obj.minimize(&[0.0, 0.0], &BfgsOptions::default());
        // stationarity: 2(x0-1) + x1 = 0, 2(x1+2) + x0 = 0
        assert!((m.x[0] - 8.0 / 3.0).abs() < 1e-4 && (m.x[1] + 10.0 / 3.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn golden_section_finds_peak() {
        let x = golden_max(|x| -(x - 0.37).powi(2), -3.0, 3.0, 1e-9);
        assert!((x - 0.37).abs() < 1e-8);
    }
}
