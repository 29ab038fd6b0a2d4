//! Two-stage starting values: marginal fits per outcome, then each
//! correlation maximized over its pair alone (Pearson, polyserial or
//! polychoric by pair type).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::likelihood::ArmData;
use super::optim::golden_max;
use super::ordinal::ordinal_mle;
use super::params::{Layout, Model};
use crate::endpoint::{LatentDesign, OutcomeKind};
use crate::error::{Error, Result};
use crate::mvn::{band, bvn_rectangle, phi_inv, try_cholesky};

/// Largest `|atanh ρ|` searched for a pairwise correlation.
const MAX_FISHER_Z: f64 = 3.8;

fn band_of(cuts: &[f64], cat: usize) -> (f64, f64) {
    let lo = if cat == 0 { f64::NEG_INFINITY } else { cuts[cat - 1] };
    let hi = if cat >= cuts.len() { f64::INFINITY } else { cuts[cat] };
    (lo, hi)
}

/// Category counts of discrete column `j` (pattern position) in one arm.
fn counts(arm: &ArmData, j: usize, levels: usize) -> Vec<f64> {
    let mut n = vec![0.0; levels];
    for (p, w) in &arm.patterns {
        n[p[j] as usize] += w;
    }
    n
}

pub(crate) fn two_stage(skeleton: &LatentDesign, layout: &Layout, arms: &[ArmData; 2]) -> Result<Vec<f64>> {
    let k = skeleton.k();
    let c = skeleton.n_continuous();
    let mut m = Model {
        mean_t: vec![0.0; k],
        mean_c: vec![0.0; k],
        sd: vec![1.0; k],
        cuts: vec![Vec::new(); k],
        corr: DMatrix::identity(k, k),
    };
    let [t, ctl] = arms;
    for (i, o) in skeleton.outcomes().iter().enumerate() {
        match &o.kind {
            OutcomeKind::Continuous => {
                let (yt, yc) = (t.column(i, c), ctl.column(i, c));
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                let (mt, mc) = (mean(&yt), mean(&yc));
                let ss: f64 = yt.iter().map(|y| (y - mt).powi(2)).chain(yc.iter().map(|y| (y - mc).powi(2))).sum();
                let sd = (ss / (yt.len() + yc.len()) as f64).sqrt();
                if !(sd > 0.0) {
                    return Err(Error::Data(format!("continuous outcome '{}' has no spread", o.name)));
                }
                m.mean_t[i] = mt;
                m.mean_c[i] = mc;
                m.sd[i] = sd;
            }
            OutcomeKind::Binary => {
                for (arm, slot) in [(t, &mut m.mean_t[i]), (ctl, &mut m.mean_c[i])] {
                    let n = counts(arm, i - c, 2);
                    if n[0] == 0.0 || n[1] == 0.0 {
                        return Err(Error::Data(format!(
                            "binary outcome '{}' shows a single category in arm {}",
                            o.name,
                            arm.arm.label()
                        )));
                    }
                    *slot = phi_inv(n[1] / (n[0] + n[1]));
                }
                m.cuts[i] = vec![0.0];
            }
            OutcomeKind::Ordinal(th) => {
                let levels = th.levels();
                let (nt, nc) = (counts(t, i - c, levels), counts(ctl, i - c, levels));
                if let Some(j) = (0..levels).find(|&j| nt[j] + nc[j] == 0.0) {
                    return Err(Error::Data(format!("ordinal outcome '{}' has no observations in category {j}", o.name)));
                }
                for (arm, n) in [(t, &nt), (ctl, &nc)] {
                    if n.iter().filter(|&&v| v > 0.0).count() < 2 {
                        return Err(Error::Data(format!(
                            "ordinal outcome '{}' shows a single category in arm {}",
                            o.name,
                            arm.arm.label()
                        )));
                    }
                }
                let (shift, cuts, _, _) = ordinal_mle(&nt, &nc)?;
                m.mean_t[i] = shift;
                m.cuts[i] = cuts;
            }
        }
    }

    for i in 0..k {
        for j in i + 1..k {
            let r = if j < c {
                pearson(&m, arms, i, j, c)
            } else if i < c {
                polyserial(&m, arms, i, j, c)
            } else {
                polychoric(&m, arms, i, j, c)
            };
            m.corr[(i, j)] = r;
            m.corr[(j, i)] = r;
        }
    }
    // pairwise estimates need not be jointly consistent
    let target = m.corr.clone();
    let mut lambda = 1.0;
    while try_cholesky(&m.corr).is_none() || crate::mvn::smallest_eigenvalue(&m.corr) < 1e-4 {
        lambda *= 0.9;
        m.corr = &target * lambda + DMatrix::identity(k, k) * (1.0 - lambda);
    }
    Ok(layout.theta(&m))
}

fn pearson(m: &Model, arms: &[ArmData; 2], i: usize, j: usize, c: usize) -> f64 {
    let (mut sij, mut sii, mut sjj) = (0.0, 0.0, 0.0);
    for arm in arms {
        let mu = m.means(arm.arm);
        for r in 0..arm.n {
            let a = arm.cont[r * c + i] - mu[i];
            let b = arm.cont[r * c + j] - mu[j];
            sij += a * b;
            sii += a * a;
            sjj += b * b;
        }
    }
    (sij / (sii * sjj).sqrt()).clamp(-0.999, 0.999)
}

fn polyserial(m: &Model, arms: &[ArmData; 2], i: usize, j: usize, c: usize) -> f64 {
    let cuts = &m.cuts[j];
    let obs: Vec<(f64, f64, f64)> = arms
        .iter()
        .flat_map(|arm| {
            let mu = m.means(arm.arm);
            (0..arm.n).map(move |r| {
                let z = (arm.cont[r * c + i] - mu[i]) / m.sd[i];
                let (lo, hi) = band_of(cuts, arm.patterns[r].0[j - c] as usize);
                (z, lo - mu[j], hi - mu[j])
            })
        })
        .collect();
    let f = |fz: f64| {
        let rho = fz.tanh();
        let s = (1.0 - rho * rho).sqrt();
        obs.iter().map(|&(z, lo, hi)| band((lo - rho * z) / s, (hi - rho * z) / s).max(1e-300).ln()).sum::<f64>()
    };
    golden_max(f, -MAX_FISHER_Z, MAX_FISHER_Z, 1e-6).tanh()
}

fn polychoric(m: &Model, arms: &[ArmData; 2], i: usize, j: usize, c: usize) -> f64 {
    let mut table: BTreeMap<(bool, u32, u32), f64> = BTreeMap::new();
    for (a, arm) in arms.iter().enumerate() {
        for (p, w) in &arm.patterns {
            *table.entry((a == 0, p[i - c], p[j - c])).or_default() += w;
        }
    }
    let cells: Vec<(f64, f64, f64, f64, f64)> = table
        .into_iter()
        .map(|((treated, a, b), n)| {
            let mu = if treated { &m.mean_t } else { &m.mean_c };
            let (l1, h1) = band_of(&m.cuts[i], a as usize);
            let (l2, h2) = band_of(&m.cuts[j], b as usize);
            (l1 - mu[i], h1 - mu[i], l2 - mu[j], h2 - mu[j], n)
        })
        .collect();
    let f = |fz: f64| {
        let rho = fz.tanh();
        cells.iter().map(|&(l1, h1, l2, h2, n)| n * bvn_rectangle(l1, h1, l2, h2, rho).max(1e-300).ln()).sum::<f64>()
    };
    golden_max(f, -MAX_FISHER_Z, MAX_FISHER_Z, 1e-6).tanh()
}
