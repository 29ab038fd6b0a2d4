//! Analytic power for individual, co-primary, multiple-primary and
//! composite endpoints. All tests are one-sided at level `alpha`.

use rayon::prelude::*;
use serde::Serialize;

use crate::endpoint::{Arm, LatentDesign, ResolvedCriterion};
use crate::error::{Error, Result};
use crate::mvn::{mvn_cdf, mvn_rectangle, phi, phi_inv, MvnOptions, RectangleProbability};

/// Largest K accepted by the inclusion–exclusion sum.
pub const MAX_MULTIPRIMARY_DIM: usize = 12;

/// Upper critical value `z_α = Φ⁻¹(1 − α)`.
pub fn z_alpha(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(phi_inv(1.0 - alpha))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(Error::Domain(format!("one-sided alpha must lie in (0, 0.5), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerQuery<'a> {
    pub design: &'a LatentDesign,
    pub n_treatment: u64,
    pub alpha: f64,
}

impl<'a> PowerQuery<'a> {
    pub fn new(design: &'a LatentDesign, n_treatment: u64, alpha: f64) -> Result<Self> {
        if n_treatment < 2 {
            return Err(Error::Domain(format!("sample size per arm must be at least 2, got {n_treatment}")));
        }
        check_alpha(alpha)?;
        design.ensure_valid()?;
        Ok(PowerQuery { design, n_treatment, alpha })
    }

    /// `√(κ n_T / (1 + κ))`, the multiplier of a standardized effect.
    fn scale(&self) -> f64 {
        let kappa = self.design.allocation();
        (kappa * self.n_treatment as f64 / (1.0 + kappa)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub power: f64,
    /// Integration error bound carried from the MVN evaluations.
    pub error: f64,
}

/// `z_k† = z_α − (δ_k / σ_k) √(κ n_T / (1 + κ))`; discrete outcomes have
/// `σ_k = 1` and latent effects.
pub fn critical_shifts(query: &PowerQuery) -> Vec<f64> {
    let z = phi_inv(1.0 - query.alpha);
    let scale = query.scale();
    query.design.outcomes().iter().map(|o| z - o.standardized_effect() * scale).collect()
}

/// `Φ(−z_k†)` for a single outcome.
pub fn power_individual(design: &LatentDesign, k: usize, n: u64, alpha: f64) -> Result<f64> {
    if k >= design.k() {
        return Err(Error::Dimension(format!("outcome index {k} out of range for {} outcomes", design.k())));
    }
    let q = PowerQuery::new(design, n, alpha)?;
    Ok(phi(-critical_shifts(&q)[k]))
}

/// Power of a single two-arm comparison with effect `delta`, variance
/// `sigma_sq`, `n` per arm and equal allocation.
pub fn power_two_sample(delta: f64, sigma_sq: f64, n: f64, alpha: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {sigma_sq}")));
    }
    Ok(phi(delta / (2.0 * sigma_sq / n).sqrt() - z_alpha(alpha)?))
}

/// Probability that every endpoint rejects: `Φ_K(−z†; Γ)`.
pub fn power_coprimary(query: &PowerQuery, opts: &MvnOptions) -> Result<PowerEstimate> {
    let gamma = query.design.build_gamma()?;
    let upper: Vec<f64> = critical_shifts(query).iter().map(|z| -z).collect();
    let p = mvn_cdf(&upper, &gamma, opts)?;
    Ok(PowerEstimate { power: p.value, error: p.error_estimate })
}

/// Probability that at least one endpoint rejects, by inclusion–exclusion
/// over all non-empty subsets of endpoints.
pub fn power_multiprimary(query: &PowerQuery, opts: &MvnOptions) -> Result<PowerEstimate> {
    let k = query.design.k();
    if k > MAX_MULTIPRIMARY_DIM {
        return Err(Error::UnsupportedDimension { dim: k, max: MAX_MULTIPRIMARY_DIM });
    }
    let gamma = query.design.build_gamma()?;
    let upper: Vec<f64> = critical_shifts(query).iter().map(|z| -z).collect();
    let terms: Vec<Result<(f64, f64)>> = (1u32..1 << k)
        .into_par_iter()
        .map(|mask| {
            let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let sub_opts = opts.with_seed(subset_seed(opts.seed, mask));
            let u: Vec<f64> = idx.iter().map(|&i| upper[i]).collect();
            let p = mvn_cdf(&u, &gamma.submatrix(&idx), &sub_opts)?;
            let sign = if idx.len() % 2 == 1 { 1.0 } else { -1.0 };
            Ok((sign * p.value, p.error_estimate))
        })
        .collect();
    let mut power = 0.0;
    let mut error = 0.0;
    for t in terms {
        let (v, e) = t?;
        power += v;
        error += e;
    }
    Ok(PowerEstimate { power: power.clamp(0.0, 1.0), error })
}

fn subset_seed(seed: u64, mask: u32) -> u64 {
    seed ^ (mask as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Response probability of one arm under the design's responder rule.
pub fn response_probability(design: &LatentDesign, arm: Arm, opts: &MvnOptions) -> Result<RectangleProbability> {
    let rule = design.resolved_rule()?;
    rule_probability(design, &rule, arm, opts)
}

/// Probability that an arm meets every criterion of an already resolved
/// rule. Outcomes without a criterion are integrated out.
pub fn rule_probability(
    design: &LatentDesign,
    rule: &[Option<ResolvedCriterion>],
    arm: Arm,
    opts: &MvnOptions,
) -> Result<RectangleProbability> {
    if rule.len() != design.k() {
        return Err(Error::Dimension(format!("rule has {} entries for {} outcomes", rule.len(), design.k())));
    }
    if rule.iter().all(Option::is_none) {
        return Err(Error::MissingResponderRule);
    }
    let gamma = design.build_gamma()?;
    let mut lower = Vec::with_capacity(rule.len());
    let mut upper = Vec::with_capacity(rule.len());
    for (o, c) in design.outcomes().iter().zip(rule) {
        let (lo, hi) = match c {
            None => (f64::NEG_INFINITY, f64::INFINITY),
            Some(c) => {
                let cuts = o.kind.thresholds().map(|t| t.cuts).unwrap_or_default();
                c.interval(&cuts)
            }
        };
        let mu = o.mean(arm);
        lower.push((lo - mu) / o.sd);
        upper.push((hi - mu) / o.sd);
    }
    mvn_rectangle(&lower, &upper, &vec![0.0; rule.len()], &gamma, opts)
}

/// Risk difference `δ* = P_T − P_C` implied by a design and its rule.
pub fn design_delta_star(design: &LatentDesign, opts: &MvnOptions) -> Result<f64> {
    let rule = design.resolved_rule()?;
    Ok(rule_probability(design, &rule, Arm::Treatment, opts)?.value
        - rule_probability(design, &rule, Arm::Control, opts)?.value)
}

/// Risk difference and per-arm variance scale of a composite endpoint,
/// with `var(δ̂*) = σ² (1/n_T + 1/n_C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositeSummary {
    pub delta_star: f64,
    pub sigma_sq: f64,
}

impl CompositeSummary {
    pub fn new(delta_star: f64, sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(Error::Domain(format!("composite variance must be positive, got {sigma_sq}")));
        }
        if !delta_star.is_finite() {
            return Err(Error::Domain("risk difference must be finite".into()));
        }
        Ok(CompositeSummary { delta_star, sigma_sq })
    }
}

/// `Φ(δ* / √(2σ²/n) − z_α)` with equal arms.
pub fn power_composite(summary: &CompositeSummary, n: u64, alpha: f64) -> Result<f64> {
    power_composite_allocated(summary, n, 1.0, alpha)
}

/// Composite power with `n_C = κ n_T`.
pub fn power_composite_allocated(summary: &CompositeSummary, n_treatment: u64, kappa: f64, alpha: f64) -> Result<f64> {
    if n_treatment < 2 {
        return Err(Error::Domain(format!("sample size per arm must be at least 2, got {n_treatment}")));
    }
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("allocation ratio must be positive, got {kappa}")));
    }
    let n = n_treatment as f64;
    let se = (summary.sigma_sq * (1.0 / n + 1.0 / (kappa * n))).sqrt();
    Ok(phi(summary.delta_star / se - z_alpha(alpha)?))
}

/// Power of the pooled two-proportion z-test with equal arms.
pub fn power_binary_standard(p_t: f64, p_c: f64, n: u64, alpha: f64) -> Result<f64> {
    for p in [p_t, p_c] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("response probability {p} must lie in (0, 1)")));
        }
    }
    if n < 2 {
        return Err(Error::Domain(format!("sample size per arm must be at least 2, got {n}")));
    }
    let pbar = 0.5 * (p_t + p_c);
    Ok(phi((p_t - p_c) / (2.0 * pbar * (1.0 - pbar) / n as f64).sqrt() - z_alpha(alpha)?))
}
