//! Two-arm ordinal probit with a common set of cuts and a location shift
//! for treatment: the marginal model of one ordinal outcome.

use super::optim::{BfgsOptions, Objective};
use crate::error::{Error, Result};
use crate::mvn::{band, phi_inv};

#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalShift {
    /// Treatment latent mean with the control mean at zero.
    pub shift: f64,
    pub se: f64,
    pub cuts: Vec<f64>,
    /// Empty cells that received half an observation.
    pub corrections: usize,
}

fn loglik(shift: f64, cuts: &[f64], counts_t: &[f64], counts_c: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (mu, counts) in [(shift, counts_t), (0.0, counts_c)] {
        for (j, &n) in counts.iter().enumerate() {
            if n == 0.0 {
                continue;
            }
            let lo = if j == 0 { f64::NEG_INFINITY } else { cuts[j - 1] - mu };
            let hi = if j == counts.len() - 1 { f64::INFINITY } else { cuts[j] - mu };
            ll += n * band(lo, hi).max(1e-300).ln();
        }
    }
    ll
}

fn unpack(x: &[f64]) -> (f64, Vec<f64>) {
    let mut cuts = Vec::with_capacity(x.len() - 1);
    cuts.push(x[1]);
    for g in &x[2..] {
        let last = *cuts.last().expect("first cut");
        cuts.push(last + g.exp());
    }
    (x[0], cuts)
}

/// Maximum-likelihood shift and cuts from category counts. Every pooled
/// category must be non-empty.
pub(crate) fn ordinal_mle(counts_t: &[f64], counts_c: &[f64]) -> Result<(f64, Vec<f64>, f64, bool)> {
    let levels = counts_t.len();
    if levels < 2 || counts_c.len() != levels {
        return Err(Error::Dimension("ordinal counts need at least two matching categories".into()));
    }
    if (0..levels).any(|j| counts_t[j] + counts_c[j] <= 0.0) {
        return Err(Error::Data("an ordinal category is empty in both arms".into()));
    }
    let cum_probit = |counts: &[f64]| -> Vec<f64> {
        let total: f64 = counts.iter().sum();
        let mut acc = 0.0;
        counts[..levels - 1]
            .iter()
            .map(|n| {
                acc += n;
                phi_inv(acc / total)
            })
            .collect()
    };
    let pooled: Vec<f64> = counts_t.iter().zip(counts_c).map(|(a, b)| a + b).collect();
    let start_cuts = cum_probit(&pooled);
    let (qt, qc) = (cum_probit(counts_t), cum_probit(counts_c));
    let diffs: Vec<f64> = qt.iter().zip(&qc).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| b - a).collect();
    let shift0 = if diffs.is_empty() { 0.0 } else { diffs.iter().sum::<f64>() / diffs.len() as f64 };
    // centre the pooled cuts on the control arm
    let cuts0: Vec<f64> = start_cuts.iter().map(|c| c + 0.5 * shift0).collect();
    let mut x0 = vec![shift0, cuts0[0]];
    x0.extend(cuts0.windows(2).map(|w| (w[1] - w[0]).max(1e-3).ln()));
    let eval = |_: usize, x: &[f64]| {
        let (s, c) = unpack(x);
        -loglik(s, &c, counts_t, counts_c)
    };
    let obj = Objective { parts: vec![(0..x0.len()).collect()], eval: &eval };
    let m = obj.minimize(&x0, &BfgsOptions { max_iterations: 200, tolerance: 1e-12 });
    let (shift, cuts) = unpack(&m.x);
    // the shift is untouched by the cut reparameterization, so its
    // variance comes straight from the internal-scale information
    let se = match obj.hessian(&m.x) {
        Ok(h) => h.try_inverse().map(|inv| inv[(0, 0)]).filter(|v| *v > 0.0).map(f64::sqrt).unwrap_or(f64::NAN),
        Err(_) => f64::NAN,
    };
    Ok((shift, cuts, se, m.converged))
}

/// Latent treatment shift of one ordinal outcome with its Wald standard
/// error. Cells empty within an arm get half an observation.
pub fn ordinal_shift(counts_t: &[f64], counts_c: &[f64]) -> Result<OrdinalShift> {
    let mut corrections = 0;
    let fix = |counts: &[f64], corrections: &mut usize| -> Vec<f64> {
        counts
            .iter()
            .map(|&n| {
                if n == 0.0 {
                    *corrections += 1;
                    0.5
                } else {
                    n
                }
            })
            .collect()
    };
    let t = fix(counts_t, &mut corrections);
    let c = fix(counts_c, &mut corrections);
    let (shift, cuts, se, _) = ordinal_mle(&t, &c)?;
    if !se.is_finite() {
        return Err(Error::Fit("ordinal shift information is singular".into()));
    }
    Ok(OrdinalShift { shift, se, cuts, corrections })
}
