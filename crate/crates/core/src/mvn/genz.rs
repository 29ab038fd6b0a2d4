//! Separation-of-variables integrator for multivariate normal rectangles.
//!
//! The rectangle probability is rewritten as an integral over the unit
//! cube of dimension K-1 (Genz 1992) and estimated with randomly shifted
//! rank-1 lattice rules. The spread across shifts gives the error estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal::{band, pdf, phi, phi_inv};
use crate::error::{Error, Result};

/// Number of random shifts per lattice round.
const SHIFTS: usize = 10;
/// Error estimate = this many standard errors of the shift average.
const ERROR_FACTOR: f64 = 3.0;
const FIRST_ROUND_POINTS: usize = 1 << 9;

const PRIMES: [f64; 24] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
    59.0, 61.0, 67.0, 71.0, 73.0, 79.0, 83.0, 89.0,
];

pub(crate) struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: u64,
    pub capped: bool,
}

/// Standardized problem: limits already centred, `corr` has unit diagonal.
pub(crate) struct Problem {
    lower: Vec<f64>,
    upper: Vec<f64>,
    chol: Vec<Vec<f64>>,
}

impl Problem {
    /// Factorizes `corr` (row-major, k×k). With `reorder`, variables are
    /// prioritized so the tightest conditional intervals come first.
    pub fn new(lower: &[f64], upper: &[f64], corr: &[Vec<f64>], reorder: bool) -> Result<Option<Self>> {
        let k = lower.len();
        let mut a = lower.to_vec();
        let mut b = upper.to_vec();
        let mut c: Vec<Vec<f64>> = corr.to_vec();
        let mut l = vec![vec![0.0; k]; k];
        let mut y = vec![0.0; k];
        for i in 0..k {
            let mut best = i;
            let mut best_p = f64::INFINITY;
            let mut best_lim = (0.0, 0.0);
            let candidates = if reorder { i..k } else { i..i + 1 };
            for j in candidates {
                let mut sum = 0.0;
                let mut ss = 0.0;
                for p in 0..i {
                    sum += l[j][p] * y[p];
                    ss += l[j][p] * l[j][p];
                }
                let s = (c[j][j] - ss).max(1e-300).sqrt();
                let lo = (a[j] - sum) / s;
                let hi = (b[j] - sum) / s;
                let p = band(lo, hi);
                if p < best_p {
                    best = j;
                    best_p = p;
                    best_lim = (lo, hi);
                }
            }
            if best != i {
                a.swap(i, best);
                b.swap(i, best);
                c.swap(i, best);
                for row in c.iter_mut() {
                    row.swap(i, best);
                }
                l.swap(i, best);
            }
            let mut d = c[i][i];
            d -= l[i][..i].iter().map(|x| x * x).sum::<f64>();
            if !(d > 1e-14) {
                return Err(Error::NotPositiveDefinite {
                    smallest_eigenvalue: super::corr::smallest_eigenvalue(&nalgebra::DMatrix::from_fn(
                        k,
                        k,
                        |r, s| corr[r][s],
                    )),
                });
            }
            let lii = d.sqrt();
            l[i][i] = lii;
            for j in i + 1..k {
                let s = c[j][i] - l[j][..i].iter().zip(&l[i][..i]).map(|(a, b)| a * b).sum::<f64>();
                l[j][i] = s / lii;
            }
            if best_p <= 0.0 {
                return Ok(None);
            }
            let (lo, hi) = best_lim;
            y[i] = ((pdf(lo) - pdf(hi)) / best_p).clamp(-40.0, 40.0);
            if !y[i].is_finite() {
                y[i] = 0.0;
            }
        }
        Ok(Some(Problem { lower: a, upper: b, chol: l }))
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Integrand at `w` in the (K-1)-cube.
    fn eval(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let k = self.dim();
        let l0 = self.chol[0][0];
        let mut lo = self.lower[0] / l0;
        let mut hi = self.upper[0] / l0;
        let mut f = band(lo, hi);
        for i in 1..k {
            if f == 0.0 {
                return 0.0;
            }
            y[i - 1] = sample_truncated(lo, hi, w[i - 1]);
            let row = &self.chol[i];
            let mut s = 0.0;
            for p in 0..i {
                s += row[p] * y[p];
            }
            lo = (self.lower[i] - s) / row[i];
            hi = (self.upper[i] - s) / row[i];
            f *= band(lo, hi);
        }
        f
    }
}

/// Inverse-CDF draw of a standard normal truncated to (lo, hi), worked in
/// whichever tail keeps precision.
#[inline]
fn sample_truncated(lo: f64, hi: f64, w: f64) -> f64 {
    let y = if lo > 0.0 {
        let dl = phi(-lo);
        let dh = phi(-hi);
        -phi_inv(dl - w * (dl - dh))
    } else {
        let dl = phi(lo);
        let dh = phi(hi);
        phi_inv(dl + w * (dh - dl))
    };
    y.clamp(-40.0, 40.0)
}

fn lattice_generator(dim: usize) -> Vec<f64> {
    PRIMES.iter().take(dim).map(|p| p.sqrt().fract()).collect()
}

/// One lattice round with `n` points per shift. Returns (mean, standard error).
fn lattice_round(problem: &Problem, n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let dim = problem.dim() - 1;
    let z = lattice_generator(dim);
    let mut w = vec![0.0; dim];
    let mut y = vec![0.0; problem.dim()];
    let mut shift = vec![0.0; dim];
    let mut means = [0.0; SHIFTS];
    for m in means.iter_mut() {
        for s in shift.iter_mut() {
            *s = rng.random::<f64>();
        }
        let mut acc = 0.0;
        for i in 1..=n {
            for j in 0..dim {
                let x = (i as f64 * z[j] + shift[j]).fract();
                // baker's transform periodizes the integrand
                w[j] = (2.0 * x - 1.0).abs();
            }
            acc += problem.eval(&w, &mut y);
        }
        *m = acc / n as f64;
    }
    let mean = means.iter().sum::<f64>() / SHIFTS as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (SHIFTS * (SHIFTS - 1)) as f64;
    (mean, var.sqrt())
}

/// Doubles the lattice size until the error target or the evaluation cap.
pub(crate) fn integrate_adaptive(problem: &Problem, accuracy: f64, max_evaluations: u64, seed: u64) -> Estimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = FIRST_ROUND_POINTS;
    let mut evaluations = 0u64;
    loop {
        let (value, se) = lattice_round(problem, n, &mut rng);
        evaluations += (n * SHIFTS) as u64;
        let error = ERROR_FACTOR * se;
        let next = (2 * n * SHIFTS) as u64;
        if error <= accuracy {
            return Estimate { value: value.clamp(0.0, 1.0), error, evaluations, capped: false };
        }
        if evaluations + next > max_evaluations {
            return Estimate { value: value.clamp(0.0, 1.0), error, evaluations, capped: true };
        }
        n *= 2;
    }
}

/// Single round with a fixed number of points; a smooth deterministic
/// function of the limits for a given seed.
pub(crate) fn integrate_fixed(problem: &Problem, points: usize, seed: u64) -> Estimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (value, se) = lattice_round(problem, points.max(1), &mut rng);
    Estimate {
        value: value.clamp(0.0, 1.0),
        error: ERROR_FACTOR * se,
        evaluations: (points * SHIFTS) as u64,
        capped: false,
    }
}
