//! Deterministic rectangle probabilities by nested Gauss–Legendre
//! quadrature: integrate the first coordinate against its density and
//! recurse on the conditional distribution of the rest, ending in the
//! closed-form bivariate case. The result is a smooth function of the
//! limits and correlations, which finite-difference derivatives rely on.

use std::sync::OnceLock;

use super::bvn::bvn_rectangle;
use super::normal::{band, pdf};

/// Half-width of the truncated integration range; the normal mass beyond
/// it is below 1e-15.
const RANGE: f64 = 8.0;

pub(crate) struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton on the Legendre
/// recurrence).
fn gauss_legendre(n: usize) -> Rule {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    Rule { x, w }
}

pub(crate) const DEFAULT_NODES: usize = 32;

fn default_rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(DEFAULT_NODES))
}

/// Standardized rectangle probability; `corr` is row-major with unit
/// diagonal and must be positive definite.
pub(crate) fn rectangle(lo: &[f64], hi: &[f64], corr: &[Vec<f64>]) -> f64 {
    recurse(lo, hi, corr, default_rule()).clamp(0.0, 1.0)
}

fn recurse(lo: &[f64], hi: &[f64], corr: &[Vec<f64>], rule: &Rule) -> f64 {
    match lo.len() {
        0 => 1.0,
        1 => band(lo[0], hi[0]),
        2 => bvn_rectangle(lo[0], hi[0], lo[1], hi[1], corr[0][1]),
        k => {
            let a = lo[0].max(-RANGE);
            let b = hi[0].min(RANGE);
            if a >= b {
                return 0.0;
            }
            // conditional law of coordinates 1.. given the first
            let r: Vec<f64> = (1..k).map(|j| corr[j][0]).collect();
            let s: Vec<f64> = r.iter().map(|rj| (1.0 - rj * rj).max(1e-300).sqrt()).collect();
            let sub: Vec<Vec<f64>> = (0..k - 1)
                .map(|i| {
                    (0..k - 1)
                        .map(|j| if i == j { 1.0 } else { (corr[i + 1][j + 1] - r[i] * r[j]) / (s[i] * s[j]) })
                        .collect()
                })
                .collect();
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut clo = vec![0.0; k - 1];
            let mut chi = vec![0.0; k - 1];
            let mut total = 0.0;
            for (&t, &wt) in rule.x.iter().zip(&rule.w) {
                let x = mid + half * t;
                for j in 0..k - 1 {
                    clo[j] = (lo[j + 1] - r[j] * x) / s[j];
                    chi[j] = (hi[j + 1] - r[j] * x) / s[j];
                }
                total += wt * pdf(x) * recurse(&clo, &chi, &sub, rule);
            }
            total * half
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let rule = gauss_legendre(12);
        let sum: f64 = rule.w.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        let x6: f64 = rule.x.iter().zip(&rule.w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((x6 - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn trivariate_orthant() {
        let c = vec![vec![1.0, 0.3, 0.5], vec![0.3, 1.0, 0.2], vec![0.5, 0.2, 1.0]];
        let exact = 0.125 + (0.3f64.asin() + 0.5f64.asin() + 0.2f64.asin()) / (4.0 * std::f64::consts::PI);
        let inf = f64::INFINITY;
        let p = rectangle(&[-inf; 3], &[0.0; 3], &c);
        assert!((p - exact).abs() < 1e-9, "{p} vs {exact}");
    }
}
