//! Normal distribution kernels: univariate CDF/quantile, bivariate orthants
//! and K-dimensional rectangle probabilities.

mod bvn;
mod corr;
mod genz;
mod normal;
mod quad;

pub use bvn::{bvn_cdf, bvn_rectangle, bvn_upper};
pub use corr::{cholesky, cholesky_lower, matrix_from_upper, smallest_eigenvalue, try_cholesky, CorrelationMatrix, EIGEN_SLACK};
pub(crate) use quad::rectangle as quad_rectangle;
pub use normal::{band, bvn_pdf, pdf, phi, phi_inv, std_normal_cdf, std_normal_quantile};

use serde::Serialize;

use crate::error::{Error, Result};

/// Lattice size per shift for smooth mode above four dimensions.
const SMOOTH_LATTICE_POINTS: usize = 4096;

/// How a rectangle probability is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnOptions {
    /// Target absolute error for the adaptive path.
    pub accuracy: f64,
    /// Hard cap on integrand evaluations.
    pub max_evaluations: u64,
    pub seed: u64,
    pub mode: Mode,
}

/// Integration strategy for three or more dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Randomized lattice with variable reordering, doubled until the
    /// accuracy target or the evaluation cap.
    Adaptive,
    /// One lattice round of this many points per shift in natural variable
    /// order: a smooth deterministic function of the limits for a given seed.
    FixedLattice(usize),
    /// Nested Gauss–Legendre quadrature up to four dimensions (fixed
    /// lattice beyond). Smooth and deterministic; used under finite
    /// differences.
    Smooth,
}

impl Default for MvnOptions {
    fn default() -> Self {
        MvnOptions { accuracy: 1e-6, max_evaluations: 10_000_000, seed: 0x5eed_0001, mode: Mode::Adaptive }
    }
}

impl MvnOptions {
    pub fn with_accuracy(mut self, accuracy: f64) -> Self {
        self.accuracy = accuracy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn fixed(points: usize, seed: u64) -> Self {
        MvnOptions { mode: Mode::FixedLattice(points), seed, ..Default::default() }
    }

    pub fn smooth() -> Self {
        MvnOptions { mode: Mode::Smooth, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RectangleProbability {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: u64,
    /// Evaluation cap reached before the accuracy target.
    pub capped: bool,
}

impl RectangleProbability {
    fn exact(value: f64) -> Self {
        RectangleProbability { value: value.clamp(0.0, 1.0), error_estimate: 1e-15, evaluations: 1, capped: false }
    }
}

/// `P(lower < Z <= upper)` for `Z ~ N(mean, corr)`.
///
/// Coordinates unbounded on both sides are marginalized out first; one and
/// two remaining dimensions are evaluated in closed form, higher ones with
/// the randomized lattice integrator.
pub fn mvn_rectangle(
    lower: &[f64],
    upper: &[f64],
    mean: &[f64],
    corr: &CorrelationMatrix,
    opts: &MvnOptions,
) -> Result<RectangleProbability> {
    let k = corr.dim();
    if lower.len() != k || upper.len() != k || mean.len() != k {
        return Err(Error::Dimension(format!(
            "rectangle limits ({}, {}) and mean ({}) must match correlation dimension {k}",
            lower.len(),
            upper.len(),
            mean.len()
        )));
    }
    let mut lo = Vec::with_capacity(k);
    let mut hi = Vec::with_capacity(k);
    let mut active = Vec::with_capacity(k);
    for i in 0..k {
        if lower[i].is_nan() || upper[i].is_nan() || !mean[i].is_finite() {
            return Err(Error::Domain(format!("coordinate {i} has NaN limit or non-finite mean")));
        }
        if lower[i] > upper[i] {
            return Err(Error::Domain(format!("lower limit exceeds upper limit at coordinate {i}")));
        }
        if lower[i] == upper[i] {
            return Ok(RectangleProbability::exact(0.0));
        }
        if lower[i] == f64::NEG_INFINITY && upper[i] == f64::INFINITY {
            continue;
        }
        active.push(i);
        lo.push(lower[i] - mean[i]);
        hi.push(upper[i] - mean[i]);
    }
    standardized_rectangle(&lo, &hi, &corr.submatrix(&active), opts)
}

/// Rectangle probability for a zero-mean problem whose limits are already
/// centred and that has no doubly-infinite coordinates.
pub(crate) fn standardized_rectangle(
    lo: &[f64],
    hi: &[f64],
    corr: &CorrelationMatrix,
    opts: &MvnOptions,
) -> Result<RectangleProbability> {
    match lo.len() {
        0 => Ok(RectangleProbability::exact(1.0)),
        1 => Ok(RectangleProbability::exact(band(lo[0], hi[0]))),
        2 => {
            let r = corr.get(0, 1);
            if r.abs() >= 1.0 {
                return Err(Error::NotPositiveDefinite { smallest_eigenvalue: 1.0 - r.abs() });
            }
            Ok(RectangleProbability::exact(bvn_rectangle(lo[0], hi[0], lo[1], hi[1], r)))
        }
        k => {
            let rows: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| corr.get(i, j)).collect()).collect();
            if opts.mode == Mode::Smooth && k <= 4 {
                if try_cholesky(corr.matrix()).is_none() {
                    return Err(Error::NotPositiveDefinite { smallest_eigenvalue: corr.smallest_eigenvalue() });
                }
                return Ok(RectangleProbability {
                    value: quad::rectangle(lo, hi, &rows),
                    error_estimate: 1e-9,
                    evaluations: (quad::DEFAULT_NODES as u64).pow(k as u32 - 2),
                    capped: false,
                });
            }
            let reorder = opts.mode == Mode::Adaptive;
            let Some(problem) = genz::Problem::new(lo, hi, &rows, reorder)? else {
                return Ok(RectangleProbability::exact(0.0));
            };
            let est = match opts.mode {
                Mode::FixedLattice(points) => genz::integrate_fixed(&problem, points, opts.seed),
                Mode::Smooth => genz::integrate_fixed(&problem, SMOOTH_LATTICE_POINTS, opts.seed),
                Mode::Adaptive => genz::integrate_adaptive(&problem, opts.accuracy, opts.max_evaluations, opts.seed),
            };
            Ok(RectangleProbability {
                value: est.value,
                error_estimate: est.error,
                evaluations: est.evaluations,
                capped: est.capped,
            })
        }
    }
}

/// `P(Z <= upper)` for zero-mean `Z` with correlation `corr`.
pub fn mvn_cdf(upper: &[f64], corr: &CorrelationMatrix, opts: &MvnOptions) -> Result<RectangleProbability> {
    let k = upper.len();
    mvn_rectangle(&vec![f64::NEG_INFINITY; k], upper, &vec![0.0; k], corr, opts)
}
