//! Log-likelihood of the latent model for one arm: density of the
//! continuous coordinates times the conditional rectangle probability of
//! the observed discrete categories.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::params::Model;
use crate::endpoint::Arm;
use crate::mvn::{band, bvn_rectangle, try_cholesky};
use crate::sim::TrialDataset;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// One arm's observations split into continuous values and categories.
#[derive(Debug, Clone)]
pub(crate) struct ArmData {
    pub arm: Arm,
    pub n: usize,
    /// `n × c`, row-major.
    pub cont: Vec<f64>,
    /// Distinct discrete patterns with multiplicities when there are no
    /// continuous outcomes; one entry per row otherwise.
    pub patterns: Vec<(Vec<u32>, f64)>,
}

impl ArmData {
    pub fn new(data: &TrialDataset, arm: Arm, n_cont: usize) -> Self {
        let rows: Vec<usize> = (0..data.len()).filter(|&i| data.arm(i) == arm).collect();
        let mut cont = Vec::with_capacity(rows.len() * n_cont);
        let mut patterns = Vec::with_capacity(rows.len());
        for &i in &rows {
            let r = data.row(i);
            cont.extend_from_slice(&r[..n_cont]);
            patterns.push((r[n_cont..].iter().map(|&v| v as u32).collect::<Vec<u32>>(), 1.0));
        }
        if n_cont == 0 {
            let mut grouped: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (p, _) in patterns {
                *grouped.entry(p).or_default() += 1.0;
            }
            patterns = grouped.into_iter().collect();
        }
        ArmData { arm, n: rows.len(), cont, patterns }
    }

    pub fn column(&self, j: usize, n_cont: usize) -> Vec<f64> {
        if j < n_cont {
            (0..self.n).map(|i| self.cont[i * n_cont + j]).collect()
        } else {
            let mut out = Vec::with_capacity(self.n);
            for (p, w) in &self.patterns {
                for _ in 0..*w as usize {
                    out.push(p[j - n_cont] as f64);
                }
            }
            out
        }
    }
}

/// `Σ log L_i` over one arm; `-∞` when the model is outside the parameter
/// space.
pub(crate) fn arm_loglik(model: &Model, data: &ArmData, n_cont: usize) -> f64 {
    let k = model.corr.nrows();
    let c = n_cont;
    let d = k - c;
    if try_cholesky(&model.corr).is_none() || model.sd.iter().any(|s| !(*s > 0.0)) {
        return f64::NEG_INFINITY;
    }
    for cuts in &model.cuts {
        if cuts.windows(2).any(|w| !(w[0] < w[1])) {
            return f64::NEG_INFINITY;
        }
    }
    let mu = model.means(data.arm);

    // Σ_cc = D R_cc D and its factor
    let sigma_cc = DMatrix::from_fn(c, c, |i, j| model.sd[i] * model.sd[j] * model.corr[(i, j)]);
    let Some(l) = try_cholesky(&sigma_cc) else { return f64::NEG_INFINITY };
    let log_det: f64 = (0..c).map(|i| l[(i, i)].ln()).sum();

    // G = Σ_dc L⁻ᵀ, conditional covariance R_dd − G Gᵀ
    let mut g = DMatrix::zeros(d, c);
    for a in 0..d {
        for j in 0..c {
            let mut v = model.corr[(c + a, j)] * model.sd[j];
            for m in 0..j {
                v -= g[(a, m)] * l[(j, m)];
            }
            g[(a, j)] = v / l[(j, j)];
        }
    }
    let mut s = vec![0.0; d];
    for a in 0..d {
        let v = 1.0 - (0..c).map(|j| g[(a, j)] * g[(a, j)]).sum::<f64>();
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        s[a] = v.sqrt();
    }
    let cond: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    if a == b {
                        1.0
                    } else {
                        let v = model.corr[(c + a, c + b)] - (0..c).map(|j| g[(a, j)] * g[(b, j)]).sum::<f64>();
                        v / (s[a] * s[b])
                    }
                })
                .collect()
        })
        .collect();

    let mut u = vec![0.0; c];
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut total = 0.0;
    for (row, (pattern, weight)) in data.patterns.iter().enumerate() {
        let mut ll = 0.0;
        if c > 0 {
            let y = &data.cont[row * c..(row + 1) * c];
            let mut sq = 0.0;
            for i in 0..c {
                let mut v = y[i] - mu[i];
                for m in 0..i {
                    v -= l[(i, m)] * u[m];
                }
                u[i] = v / l[(i, i)];
                sq += u[i] * u[i];
            }
            ll += -0.5 * sq - log_det - c as f64 * LN_SQRT_2PI;
        }
        if d > 0 {
            for a in 0..d {
                let mut m = mu[c + a];
                for j in 0..c {
                    m += g[(a, j)] * u[j];
                }
                let cuts = &model.cuts[c + a];
                let cat = pattern[a] as usize;
                let band_lo = if cat == 0 { f64::NEG_INFINITY } else { cuts[cat - 1] };
                let band_hi = if cat >= cuts.len() { f64::INFINITY } else { cuts[cat] };
                lo[a] = (band_lo - m) / s[a];
                hi[a] = (band_hi - m) / s[a];
            }
            let p = match d {
                1 => band(lo[0], hi[0]),
                2 => bvn_rectangle(lo[0], hi[0], lo[1], hi[1], cond[0][1]),
                _ => crate::mvn::quad_rectangle(&lo, &hi, &cond),
            };
            ll += p.max(1e-300).ln();
        }
        total += weight * ll;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoint::{thresholds_from_probs, LatentDesign, OutcomeSpec};
    use crate::fit::params::Layout;
    use crate::mvn::{bvn_pdf, pdf};

    #[test]
    fn mixed_pair_matches_direct_integral() {
        // one continuous and one binary outcome: f(y) P(Y* in band | y)
        let design = LatentDesign::from_upper(
            vec![OutcomeSpec::continuous("c", 2.0, 1.0, 0.0), OutcomeSpec::binary("b", 0.3, 0.0)],
            &[0.6],
            None,
            1.0,
        )
        .unwrap();
        let layout = Layout::new(&design);
        let model = layout.model(&[1.0, 0.0, 2.0, 0.3, 0.0, 0.6]);
        let data = TrialDataset::new(2, vec![Arm::Treatment, Arm::Treatment], vec![1.7, 1.0, -0.4, 0.0]).unwrap();
        let arm = ArmData::new(&data, Arm::Treatment, 1);
        let got = arm_loglik(&model, &arm, 1);
        // oracle: integrate the bivariate density over the latent band
        let direct = |y: f64, above: bool| {
            let z = (y - 1.0) / 2.0;
            let (a, b) = if above { (-0.3, 8.0) } else { (-8.0, -0.3) };
            let steps = 20000;
            let h = (b - a) / steps as f64;
            let mut s = 0.0;
            for i in 0..steps {
                let w = a + (i as f64 + 0.5) * h;
                s += bvn_pdf(z, w, 0.6) * h;
            }
            (s / 2.0).ln()
        };
        let want = direct(1.7, true) + direct(-0.4, false);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        assert!(pdf(0.0) > 0.0);
    }

    #[test]
    fn grouped_patterns_weigh_repeats() {
        let design = LatentDesign::from_upper(
            vec![
                OutcomeSpec::ordinal("o", thresholds_from_probs(&[0.3, 0.4, 0.3]).unwrap(), 0.2, 0.0),
                OutcomeSpec::binary("b", 0.1, 0.0),
            ],
            &[0.3],
            None,
            1.0,
        )
        .unwrap();
        let layout = Layout::new(&design);
        let theta = layout.theta(&Model {
            mean_t: vec![0.2, 0.1],
            mean_c: vec![0.0, 0.0],
            sd: vec![1.0, 1.0],
            cuts: vec![vec![-0.5, 0.5], vec![0.0]],
            corr: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
        });
        let model = layout.model(&theta);
        let data =
            TrialDataset::new(2, vec![Arm::Control; 3], vec![1.0, 1.0, 1.0, 1.0, 2.0, 0.0]).unwrap();
        let arm = ArmData::new(&data, Arm::Control, 0);
        assert_eq!(arm.patterns.len(), 2);
        let p11 = bvn_rectangle(-0.5, 0.5, 0.0, f64::INFINITY, 0.3);
        let p20 = bvn_rectangle(0.5, f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.3);
        let want = 2.0 * p11.ln() + p20.ln();
        assert!((arm_loglik(&model, &arm, 0) - want).abs() < 1e-12);
    }
}
