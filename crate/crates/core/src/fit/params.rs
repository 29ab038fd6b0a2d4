//! Parameter layout of the latent model and the maps between the natural
//! scale and the unconstrained scale the optimizer works on.
//!
//! Natural order, outcome by outcome: continuous `(μ_T, μ_C, σ)`, ordinal
//! `(μ_T, τ_1..τ_{L-1})` with the control latent mean pinned at zero,
//! binary `(μ_T, μ_C)` with the cut pinned at zero; then the correlations
//! `ρ_ij`, `i < j`, row by row.

use nalgebra::DMatrix;

use crate::endpoint::{Arm, LatentDesign, OutcomeKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Block {
    Continuous { mu_t: usize, mu_c: usize, sd: usize },
    Ordinal { mu_t: usize, first_cut: usize, cuts: usize },
    Binary { mu_t: usize, mu_c: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub blocks: Vec<Block>,
    pub rho_start: usize,
    pub k: usize,
    pub names: Vec<String>,
}

/// Latent model on the natural scale.
#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub mean_t: Vec<f64>,
    pub mean_c: Vec<f64>,
    pub sd: Vec<f64>,
    /// Cuts of each discrete outcome; empty for continuous ones.
    pub cuts: Vec<Vec<f64>>,
    pub corr: DMatrix<f64>,
}

impl Model {
    pub fn means(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Treatment => &self.mean_t,
            Arm::Control => &self.mean_c,
        }
    }
}

impl Layout {
    pub fn new(design: &LatentDesign) -> Self {
        let mut blocks = Vec::new();
        let mut names = Vec::new();
        let mut at = 0;
        for o in design.outcomes() {
            let n = &o.name;
            match &o.kind {
                OutcomeKind::Continuous => {
                    blocks.push(Block::Continuous { mu_t: at, mu_c: at + 1, sd: at + 2 });
                    names.extend([format!("{n}.mean_T"), format!("{n}.mean_C"), format!("{n}.sd")]);
                    at += 3;
                }
                OutcomeKind::Ordinal(t) => {
                    let cuts = t.cuts.len();
                    blocks.push(Block::Ordinal { mu_t: at, first_cut: at + 1, cuts });
                    names.push(format!("{n}.mean_T"));
                    names.extend((1..=cuts).map(|j| format!("{n}.cut{j}")));
                    at += 1 + cuts;
                }
                OutcomeKind::Binary => {
                    blocks.push(Block::Binary { mu_t: at, mu_c: at + 1 });
                    names.extend([format!("{n}.mean_T"), format!("{n}.mean_C")]);
                    at += 2;
                }
            }
        }
        let k = blocks.len();
        let outcomes = design.outcomes();
        for i in 0..k {
            for j in i + 1..k {
                names.push(format!("rho({},{})", outcomes[i].name, outcomes[j].name));
            }
        }
        Layout { blocks, rho_start: at, k, names }
    }

    pub fn len(&self) -> usize {
        self.rho_start + self.k * (self.k - 1) / 2
    }

    pub fn rho_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.rho_start + i * (2 * self.k - i - 1) / 2 + (j - i - 1)
    }

    pub fn model(&self, theta: &[f64]) -> Model {
        let k = self.k;
        let mut m = Model {
            mean_t: vec![0.0; k],
            mean_c: vec![0.0; k],
            sd: vec![1.0; k],
            cuts: vec![Vec::new(); k],
            corr: DMatrix::identity(k, k),
        };
        for (i, b) in self.blocks.iter().enumerate() {
            match *b {
                Block::Continuous { mu_t, mu_c, sd } => {
                    m.mean_t[i] = theta[mu_t];
                    m.mean_c[i] = theta[mu_c];
                    m.sd[i] = theta[sd];
                }
                Block::Ordinal { mu_t, first_cut, cuts } => {
                    m.mean_t[i] = theta[mu_t];
                    m.cuts[i] = theta[first_cut..first_cut + cuts].to_vec();
                }
                Block::Binary { mu_t, mu_c } => {
                    m.mean_t[i] = theta[mu_t];
                    m.mean_c[i] = theta[mu_c];
                    m.cuts[i] = vec![0.0];
                }
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                let r = theta[self.rho_index(i, j)];
                m.corr[(i, j)] = r;
                m.corr[(j, i)] = r;
            }
        }
        m
    }

    /// Inverse of [`Layout::model`] for the parameters it carries.
    pub fn theta(&self, m: &Model) -> Vec<f64> {
        let mut t = vec![0.0; self.len()];
        for (i, b) in self.blocks.iter().enumerate() {
            match *b {
                Block::Continuous { mu_t, mu_c, sd } => {
                    t[mu_t] = m.mean_t[i];
                    t[mu_c] = m.mean_c[i];
                    t[sd] = m.sd[i];
                }
                Block::Ordinal { mu_t, first_cut, cuts } => {
                    // shift so the control latent mean is zero
                    t[mu_t] = m.mean_t[i] - m.mean_c[i];
                    for j in 0..cuts {
                        t[first_cut + j] = m.cuts[i][j] - m.mean_c[i];
                    }
                }
                Block::Binary { mu_t, mu_c } => {
                    t[mu_t] = m.mean_t[i];
                    t[mu_c] = m.mean_c[i];
                }
            }
        }
        for i in 0..self.k {
            for j in i + 1..self.k {
                t[self.rho_index(i, j)] = m.corr[(i, j)];
            }
        }
        t
    }

    pub fn to_internal(&self, theta: &[f64]) -> Vec<f64> {
        let mut x = theta.to_vec();
        for b in &self.blocks {
            match *b {
                Block::Continuous { sd, .. } => x[sd] = theta[sd].ln(),
                Block::Ordinal { first_cut, cuts, .. } => {
                    for j in 1..cuts {
                        x[first_cut + j] = (theta[first_cut + j] - theta[first_cut + j - 1]).ln();
                    }
                }
                Block::Binary { .. } => {}
            }
        }
        for v in &mut x[self.rho_start..] {
            *v = v.atanh();
        }
        x
    }

    pub fn to_natural(&self, x: &[f64]) -> Vec<f64> {
        let mut t = x.to_vec();
        for b in &self.blocks {
            match *b {
                Block::Continuous { sd, .. } => t[sd] = x[sd].exp(),
                Block::Ordinal { first_cut, cuts, .. } => {
                    for j in 1..cuts {
                        t[first_cut + j] = t[first_cut + j - 1] + x[first_cut + j].exp();
                    }
                }
                Block::Binary { .. } => {}
            }
        }
        for v in &mut t[self.rho_start..] {
            *v = v.tanh();
        }
        t
    }

    /// `∂θ/∂x` at an internal point.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let p = self.len();
        let mut j = DMatrix::identity(p, p);
        for b in &self.blocks {
            match *b {
                Block::Continuous { sd, .. } => j[(sd, sd)] = x[sd].exp(),
                Block::Ordinal { first_cut, cuts, .. } => {
                    for r in 1..cuts {
                        j[(first_cut + r, first_cut)] = 1.0;
                        for c in 1..=r {
                            j[(first_cut + r, first_cut + c)] = x[first_cut + c].exp();
                        }
                    }
                }
                Block::Binary { .. } => {}
            }
        }
        for i in self.rho_start..p {
            j[(i, i)] = 1.0 - x[i].tanh().powi(2);
        }
        j
    }

    /// Parameters that enter the likelihood of one arm.
    pub fn arm_params(&self, arm: Arm) -> Vec<usize> {
        let skip: Vec<usize> = self
            .blocks
            .iter()
            .filter_map(|b| match (*b, arm) {
                (Block::Continuous { mu_c, .. }, Arm::Treatment) | (Block::Binary { mu_c, .. }, Arm::Treatment) => {
                    Some(mu_c)
                }
                (Block::Continuous { mu_t, .. }, Arm::Control)
                | (Block::Binary { mu_t, .. }, Arm::Control)
                | (Block::Ordinal { mu_t, .. }, Arm::Control) => Some(mu_t),
                _ => None,
            })
            .collect();
        (0..self.len()).filter(|i| !skip.contains(i)).collect()
    }

    /// Parameters of outcome `i` excluding correlations.
    pub fn outcome_params(&self, i: usize) -> Vec<usize> {
        match self.blocks[i] {
            Block::Continuous { mu_t, mu_c, sd } => vec![mu_t, mu_c, sd],
            Block::Ordinal { mu_t, first_cut, cuts } => std::iter::once(mu_t).chain(first_cut..first_cut + cuts).collect(),
            Block::Binary { mu_t, mu_c } => vec![mu_t, mu_c],
        }
    }
}
