use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Numerical slack allowed below zero for the smallest eigenvalue.
pub const EIGEN_SLACK: f64 = 1e-10;

/// A validated correlation matrix: symmetric, unit diagonal, entries in
/// [-1, 1], positive semi-definite up to [`EIGEN_SLACK`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "correlation matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let k = m.nrows();
        for i in 0..k {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry {i} is {} (must be 1)",
                    m[(i, i)]
                )));
            }
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidCorrelation(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
                if a.abs() > 1.0 {
                    return Err(Error::InvalidCorrelation(format!(
                        "correlation ({i},{j}) = {a} out of range"
                    )));
                }
            }
        }
        let lmin = smallest_eigenvalue(&m);
        if lmin < -EIGEN_SLACK {
            return Err(Error::NotPositiveDefinite { smallest_eigenvalue: lmin });
        }
        Ok(CorrelationMatrix(m))
    }

    pub fn identity(k: usize) -> Self {
        CorrelationMatrix(DMatrix::identity(k, k))
    }

    /// Every off-diagonal equal to `rho`.
    pub fn equicorrelated(k: usize, rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho }))
    }

    /// Builds from the row-major upper triangle `(0,1), (0,2), …, (k-2,k-1)`.
    pub fn from_upper(k: usize, upper: &[f64]) -> Result<Self> {
        Self::new(matrix_from_upper(k, upper)?)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        let k = self.dim();
        let mut out = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn submatrix(&self, idx: &[usize]) -> CorrelationMatrix {
        CorrelationMatrix(DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.0[(idx[i], idx[j])]))
    }

    /// Reorders coordinates so that new coordinate `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> CorrelationMatrix {
        self.submatrix(perm)
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        smallest_eigenvalue(&self.0)
    }
}

pub fn matrix_from_upper(k: usize, upper: &[f64]) -> Result<DMatrix<f64>> {
    if upper.len() != k * k.saturating_sub(1) / 2 {
        return Err(Error::Dimension(format!(
            "{k} outcomes need {} upper-triangle correlations, got {}",
            k * k.saturating_sub(1) / 2,
            upper.len()
        )));
    }
    let mut m = DMatrix::identity(k, k);
    let mut it = upper.iter();
    for i in 0..k {
        for j in i + 1..k {
            let v = *it.next().expect("length checked");
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

pub fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = corr`.
pub fn cholesky(corr: &CorrelationMatrix) -> Result<DMatrix<f64>> {
    cholesky_lower(corr.matrix())
}

/// Cholesky of any symmetric matrix; errors name the smallest eigenvalue.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match try_cholesky(a) {
        Some(l) => Ok(l),
        None => Err(Error::NotPositiveDefinite { smallest_eigenvalue: smallest_eigenvalue(a) }),
    }
}

/// Cholesky without the eigenvalue diagnostic; `None` when not PD.
pub fn try_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}
