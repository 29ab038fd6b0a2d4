//! Minimal per-arm sample sizes reaching a target power.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::endpoint::LatentDesign;
use crate::error::{Error, Result};
use crate::mvn::{phi_inv, MvnOptions};
use crate::power::{self, PowerQuery};

/// Largest per-arm size the searches will consider.
pub const N_MAX: u64 = 1_000_000;
/// Integrator accuracy used to confirm the bracket of a search result.
pub const BRACKET_ACCURACY: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointType {
    Individual,
    Coprimary,
    Multiprimary,
    Composite,
    BinaryStandard,
}

impl EndpointType {
    pub fn as_str(self) -> &'static str {
        match self {
            EndpointType::Individual => "individual",
            EndpointType::Coprimary => "coprimary",
            EndpointType::Multiprimary => "multiprimary",
            EndpointType::Composite => "composite",
            EndpointType::BinaryStandard => "binary_standard",
        }
    }
}

impl fmt::Display for EndpointType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EndpointType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "individual" => EndpointType::Individual,
            "coprimary" | "co_primary" => EndpointType::Coprimary,
            "multiprimary" | "multiple_primary" => EndpointType::Multiprimary,
            "composite" => EndpointType::Composite,
            "binary_standard" | "binary" => EndpointType::BinaryStandard,
            other => return Err(Error::Config(format!("unknown endpoint type '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSizeResult {
    pub n: u64,
    pub achieved_power: f64,
    pub endpoint_type: EndpointType,
}

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("target power must lie in (0, 1), got {target}")))
    }
}

/// Smallest `n` in `[2, N_MAX]` with `power(n) >= target`, assuming power
/// is nondecreasing: doubling from 2, then bisection.
pub fn search_min_n(power: impl FnMut(u64) -> Result<f64>, target: f64) -> Result<u64> {
    search_min_n_from(power, target, 2)
}

/// As [`search_min_n`], with the bracket grown outward from `hint`.
pub fn search_min_n_from(mut power: impl FnMut(u64) -> Result<f64>, target: f64, hint: u64) -> Result<u64> {
    check_target(target)?;
    let hint = hint.clamp(2, N_MAX);
    // invariant: power(lo) < target <= power(hi)
    let (mut lo, mut hi);
    let mut step = (hint / 16).max(1);
    if power(hint)? >= target {
        hi = hint;
        loop {
            if hi == 2 {
                return Ok(2);
            }
            let cand = hi.saturating_sub(step).max(2);
            if power(cand)? >= target {
                hi = cand;
                step *= 2;
            } else {
                lo = cand;
                break;
            }
        }
    } else {
        lo = hint;
        loop {
            if lo >= N_MAX {
                return Err(Error::EffectTooSmall { n_max: N_MAX });
            }
            let cand = (lo + step).min(N_MAX);
            if power(cand)? >= target {
                hi = cand;
                break;
            }
            lo = cand;
            step *= 2;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if power(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Moves `n` until `power(n-1) < target <= power(n)` under `power`.
fn confirm_bracket(mut n: u64, mut power: impl FnMut(u64) -> Result<f64>, target: f64) -> Result<(u64, f64)> {
    let mut p = power(n)?;
    while p < target {
        if n >= N_MAX {
            return Err(Error::EffectTooSmall { n_max: N_MAX });
        }
        n += 1;
        p = power(n)?;
    }
    while n > 2 {
        let below = power(n - 1)?;
        if below >= target {
            n -= 1;
            p = below;
        } else {
            break;
        }
    }
    Ok((n, p))
}

/// Normal-approximation size used to seed searches.
fn closed_form_guess(standardized_effect: f64, alpha: f64, target: f64) -> u64 {
    let z = phi_inv(1.0 - alpha) + phi_inv(target);
    let n = 2.0 * z * z / (standardized_effect * standardized_effect);
    if n.is_finite() {
        (n.ceil() as u64).clamp(2, N_MAX)
    } else {
        N_MAX
    }
}

/// Two-sample size for one endpoint with effect `delta` and variance
/// `sigma_sq`, equal allocation.
pub fn n_individual(delta: f64, sigma_sq: f64, alpha: f64, target_power: f64) -> Result<SampleSizeResult> {
    if !(delta > 0.0) {
        return Err(Error::Infeasible(format!("effect {delta} must be positive in the tested direction")));
    }
    let hint = closed_form_guess(delta / sigma_sq.sqrt(), alpha, target_power);
    let n = search_min_n_from(|n| power::power_two_sample(delta, sigma_sq, n as f64, alpha), target_power, hint)?;
    Ok(SampleSizeResult {
        n,
        achieved_power: power::power_two_sample(delta, sigma_sq, n as f64, alpha)?,
        endpoint_type: EndpointType::Individual,
    })
}

/// Size for outcome `k` of a design (honours the allocation ratio).
pub fn n_individual_in_design(design: &LatentDesign, k: usize, alpha: f64, target_power: f64) -> Result<SampleSizeResult> {
    let o = design.outcome(k);
    if !(o.effect() > 0.0) {
        return Err(Error::Infeasible(format!("outcome '{}' has no positive effect", o.name)));
    }
    let hint = closed_form_guess(o.standardized_effect(), alpha, target_power);
    let n = search_min_n_from(|n| power::power_individual(design, k, n, alpha), target_power, hint)?;
    Ok(SampleSizeResult {
        n,
        achieved_power: power::power_individual(design, k, n, alpha)?,
        endpoint_type: EndpointType::Individual,
    })
}

pub fn n_coprimary(design: &LatentDesign, alpha: f64, target_power: f64, opts: &MvnOptions) -> Result<SampleSizeResult> {
    if let Some(o) = design.outcomes().iter().find(|o| !(o.effect() > 0.0)) {
        return Err(Error::Infeasible(format!(
            "co-primary power cannot reach the target: outcome '{}' has effect {}",
            o.name,
            o.effect()
        )));
    }
    mvn_search(design, alpha, target_power, opts, EndpointType::Coprimary, power::power_coprimary)
}

pub fn n_multiprimary(design: &LatentDesign, alpha: f64, target_power: f64, opts: &MvnOptions) -> Result<SampleSizeResult> {
    if design.outcomes().iter().all(|o| !(o.effect() > 0.0)) {
        return Err(Error::Infeasible("no outcome has a positive effect".into()));
    }
    mvn_search(design, alpha, target_power, opts, EndpointType::Multiprimary, power::power_multiprimary)
}

fn mvn_search(
    design: &LatentDesign,
    alpha: f64,
    target_power: f64,
    opts: &MvnOptions,
    endpoint_type: EndpointType,
    f: fn(&PowerQuery, &MvnOptions) -> Result<power::PowerEstimate>,
) -> Result<SampleSizeResult> {
    design.ensure_valid()?;
    // individual sizes bound the answer: co-primary from below, multiple-primary from above
    let individual: Vec<u64> = (0..design.k())
        .filter(|&k| design.outcome(k).effect() > 0.0)
        .map(|k| n_individual_in_design(design, k, alpha, target_power).map(|r| r.n))
        .collect::<Result<_>>()?;
    let hint = match endpoint_type {
        EndpointType::Coprimary => individual.iter().copied().max(),
        _ => individual.iter().copied().min(),
    }
    .unwrap_or(2);
    let eval = |n: u64, o: &MvnOptions| -> Result<power::PowerEstimate> { f(&PowerQuery::new(design, n, alpha)?, o) };
    let n = search_min_n_from(|n| Ok(eval(n, opts)?.power), target_power, hint)?;
    // re-evaluate at tight accuracy only where the coarse estimate cannot decide
    let tight = opts.with_accuracy(opts.accuracy.min(BRACKET_ACCURACY));
    let decide = |n: u64| -> Result<f64> {
        let coarse = eval(n, opts)?;
        if (coarse.power - target_power).abs() > 3.0 * coarse.error.max(opts.accuracy) {
            Ok(coarse.power)
        } else {
            Ok(eval(n, &tight)?.power)
        }
    };
    let (n, p) = confirm_bracket(n, decide, target_power)?;
    Ok(SampleSizeResult { n, achieved_power: p, endpoint_type })
}

/// `n = ⌈2σ²(z_{1−β} + z_α)² / δ*²⌉`.
pub fn n_composite(delta_star: f64, sigma_sq: f64, alpha: f64, target_power: f64) -> Result<SampleSizeResult> {
    if !(delta_star > 0.0) {
        return Err(Error::Infeasible(format!("risk difference {delta_star} must be positive")));
    }
    check_target(target_power)?;
    let summary = power::CompositeSummary::new(delta_star, sigma_sq)?;
    let z = power::z_alpha(alpha)? + phi_inv(target_power);
    let n = ceil_guarded(2.0 * sigma_sq * z * z / (delta_star * delta_star));
    Ok(SampleSizeResult {
        n,
        achieved_power: power::power_composite(&summary, n, alpha)?,
        endpoint_type: EndpointType::Composite,
    })
}

/// Two-proportion normal-approximation size
/// `⌈(z_α + z_{1−β})² · 2p̄(1−p̄) / (p_T − p_C)²⌉`.
pub fn n_binary_standard(p_t: f64, p_c: f64, alpha: f64, target_power: f64) -> Result<SampleSizeResult> {
    for p in [p_t, p_c] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("response probability {p} must lie in (0, 1)")));
        }
    }
    if !(p_t > p_c) {
        return Err(Error::Infeasible(format!("treatment rate {p_t} does not exceed control rate {p_c}")));
    }
    check_target(target_power)?;
    let z = power::z_alpha(alpha)? + phi_inv(target_power);
    let pbar = 0.5 * (p_t + p_c);
    let d = p_t - p_c;
    let n = ceil_guarded(z * z * 2.0 * pbar * (1.0 - pbar) / (d * d));
    Ok(SampleSizeResult {
        n,
        achieved_power: power::power_binary_standard(p_t, p_c, n, alpha)?,
        endpoint_type: EndpointType::BinaryStandard,
    })
}

/// Ceiling that ignores floating-point dust just above an integer.
fn ceil_guarded(x: f64) -> u64 {
    let r = x.round();
    let n = if (x - r).abs() < 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (n as u64).max(2)
}
