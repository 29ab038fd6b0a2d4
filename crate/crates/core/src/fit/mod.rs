//! Maximum-likelihood fit of the latent mixed-outcome model to patient
//! data, and the delta-method functionals of the composite endpoint.

mod likelihood;
mod optim;
mod ordinal;
mod params;
mod start;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use ordinal::{ordinal_shift, OrdinalShift};

use crate::endpoint::{Arm, LatentDesign, ResolvedCriterion, ResponderRule};
use crate::error::{Error, Result};
use crate::mvn::{mvn_rectangle, try_cholesky, CorrelationMatrix, MvnOptions};
use crate::power::z_alpha;
use crate::sim::TrialDataset;
use likelihood::{arm_loglik, ArmData};
use optim::{BfgsOptions, Objective};
use params::Layout;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Polish the two-stage estimate by joint quasi-Newton maximization.
    pub refine: bool,
    pub max_iterations: usize,
    /// Convergence threshold on the predicted log-likelihood gain.
    pub tolerance: f64,
    /// Resamples for the bootstrap covariance fallback; 0 disables it.
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { refine: true, max_iterations: 500, tolerance: 1e-8, bootstrap_resamples: 200, seed: 0x0f17 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    ObservedInformation,
    Bootstrap,
    Unusable,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameter names, aligned with `estimates`.
    pub names: Vec<String>,
    /// Natural-scale estimates.
    pub estimates: Vec<f64>,
    pub covariance: Option<DMatrix<f64>>,
    pub covariance_source: CovarianceSource,
    /// Why the observed information was not used, if it was not.
    pub covariance_note: Option<String>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_treatment: usize,
    pub n_control: usize,
    skeleton: LatentDesign,
    layout: Layout,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.estimates[i])
    }

    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance.as_ref().map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }

    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        self.layout.model(&self.estimates).corr
    }

    pub fn skeleton(&self) -> &LatentDesign {
        &self.skeleton
    }

    /// The fitted model as a design: fitted means, standard deviations,
    /// cuts and correlations, with the skeleton's responder rule.
    pub fn fitted_design(&self) -> Result<LatentDesign> {
        let m = self.layout.model(&self.estimates);
        let outcomes = self
            .skeleton
            .outcomes()
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let mut o = o.clone();
                o.mean_treatment = m.mean_t[i];
                o.mean_control = m.mean_c[i];
                o.sd = m.sd[i];
                if let crate::endpoint::OutcomeKind::Ordinal(t) = &mut o.kind {
                    t.cuts = m.cuts[i].clone();
                }
                o
            })
            .collect::<Vec<_>>();
        let rule = match self.skeleton.responder_rule() {
            Some(r) => Some(self.rule_on_fitted_cuts(r)?),
            None => None,
        };
        LatentDesign::new(outcomes, m.corr, rule, self.skeleton.allocation())
    }

    /// Re-expresses discrete thresholds of a skeleton rule at the fitted
    /// cut values.
    fn rule_on_fitted_cuts(&self, rule: &ResponderRule) -> Result<ResponderRule> {
        let m = self.layout.model(&self.estimates);
        let resolved = rule.resolve(self.skeleton.outcomes())?;
        let mut out = rule.clone();
        for (i, (c, r)) in out.criteria.iter_mut().zip(&resolved).enumerate() {
            if let (Some(c), Some(ResolvedCriterion::Discrete { cut, .. })) = (c.as_mut(), r) {
                c.threshold = m.cuts[i][*cut];
            }
        }
        Ok(out)
    }

    pub fn report(&self) -> FitReport {
        let se = self.standard_errors();
        let corr = self.correlation_matrix();
        FitReport {
            outcomes: self.skeleton.outcomes().iter().map(|o| o.name.clone()).collect(),
            converged: self.converged,
            iterations: self.iterations,
            log_likelihood: self.log_likelihood,
            covariance_source: self.covariance_source,
            covariance_note: self.covariance_note.clone(),
            n_treatment: self.n_treatment,
            n_control: self.n_control,
            parameters: self
                .names
                .iter()
                .enumerate()
                .map(|(i, n)| ParameterReport {
                    name: n.clone(),
                    estimate: self.estimates[i],
                    standard_error: se.as_ref().map(|s| s[i]),
                })
                .collect(),
            correlation: (0..corr.nrows()).map(|i| corr.row(i).iter().copied().collect()).collect(),
        }
    }
}

/// Structured view of a fit for JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub outcomes: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub covariance_source: CovarianceSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance_note: Option<String>,
    pub n_treatment: usize,
    pub n_control: usize,
    pub parameters: Vec<ParameterReport>,
    pub correlation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterReport {
    pub name: String,
    pub estimate: f64,
    pub standard_error: Option<f64>,
}

struct Problem {
    layout: Layout,
    arms: [ArmData; 2],
    n_cont: usize,
}

impl Problem {
    fn new(dataset: &TrialDataset, skeleton: &LatentDesign) -> Self {
        let n_cont = skeleton.n_continuous();
        Problem {
            layout: Layout::new(skeleton),
            arms: [ArmData::new(dataset, Arm::Treatment, n_cont), ArmData::new(dataset, Arm::Control, n_cont)],
            n_cont,
        }
    }

    fn eval(&self, part: usize, x: &[f64]) -> f64 {
        let model = self.layout.model(&self.layout.to_natural(x));
        -arm_loglik(&model, &self.arms[part], self.n_cont)
    }

    fn parts(&self) -> Vec<Vec<usize>> {
        vec![self.layout.arm_params(Arm::Treatment), self.layout.arm_params(Arm::Control)]
    }
}

/// Fits the latent model whose structure (outcome kinds, level counts and
/// rule) is given by `skeleton`; its parameter values are ignored.
/// Dataset columns follow the skeleton's outcome order.
pub fn fit(dataset: &TrialDataset, skeleton: &LatentDesign, opts: &FitOptions) -> Result<FitResult> {
    dataset.check_against(skeleton)?;
    let problem = Problem::new(dataset, skeleton);
    let theta0 = start::two_stage(skeleton, &problem.layout, &problem.arms)?;
    let x0 = problem.layout.to_internal(&theta0);
    let eval = |p: usize, x: &[f64]| problem.eval(p, x);
    let objective = Objective { parts: problem.parts(), eval: &eval };
    let (x, value, iterations, converged) = if opts.refine {
        let bfgs = BfgsOptions { max_iterations: opts.max_iterations, tolerance: opts.tolerance };
        let m = objective.minimize(&x0, &bfgs);
        (m.x, m.value, m.iterations, m.converged)
    } else {
        let v = eval(0, &x0) + eval(1, &x0);
        (x0, v, 0, true)
    };
    if !value.is_finite() {
        return Err(Error::Fit("log-likelihood is not finite at the estimate".into()));
    }
    let layout = &problem.layout;
    let estimates = layout.to_natural(&x);

    let mut note = None;
    let internal_cov = match objective.hessian(&x) {
        Err((i, j)) => {
            note = Some(Error::NonFiniteHessian(layout.names[i].clone(), layout.names[j].clone()).to_string());
            None
        }
        Ok(info) => match try_cholesky(&info) {
            Some(l) => {
                let linv = l.try_inverse().expect("triangular factor with positive diagonal");
                Some(linv.transpose() * linv)
            }
            None => {
                note = Some("observed information is not positive definite".into());
                None
            }
        },
    };
    let (covariance, source) = match internal_cov {
        Some(c) => {
            let j = layout.jacobian(&x);
            let c = &j * c * j.transpose();
            (Some(symmetrize(c)), CovarianceSource::ObservedInformation)
        }
        None if opts.bootstrap_resamples > 0 => match bootstrap(dataset, &problem, &x, opts) {
            Ok(c) => (Some(c), CovarianceSource::Bootstrap),
            Err(e) => {
                note = Some(format!("{}; bootstrap failed: {e}", note.unwrap_or_default()));
                (None, CovarianceSource::Unusable)
            }
        },
        None => (None, CovarianceSource::Unusable),
    };
    Ok(FitResult {
        names: layout.names.clone(),
        estimates,
        covariance,
        covariance_source: source,
        covariance_note: note,
        log_likelihood: -value,
        converged,
        iterations,
        n_treatment: problem.arms[0].n,
        n_control: problem.arms[1].n,
        skeleton: skeleton.clone(),
        layout: problem.layout.clone(),
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Arm-stratified nonparametric bootstrap covariance of the natural-scale
/// estimates, each resample refitted from the full-data estimate.
fn bootstrap(dataset: &TrialDataset, problem: &Problem, x_hat: &[f64], opts: &FitOptions) -> Result<DMatrix<f64>> {
    let b = opts.bootstrap_resamples;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let by_arm: Vec<Vec<usize>> = [Arm::Treatment, Arm::Control]
        .iter()
        .map(|&a| (0..dataset.len()).filter(|&i| dataset.arm(i) == a).collect())
        .collect();
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(b);
    for _ in 0..b {
        let rows: Vec<usize> =
            by_arm.iter().flat_map(|idx| (0..idx.len()).map(|_| idx[rng.random_range(0..idx.len())]).collect::<Vec<_>>()).collect();
        let sub = dataset.subset(&rows);
        let p = Problem {
            layout: problem.layout.clone(),
            arms: [ArmData::new(&sub, Arm::Treatment, problem.n_cont), ArmData::new(&sub, Arm::Control, problem.n_cont)],
            n_cont: problem.n_cont,
        };
        let eval = |part: usize, x: &[f64]| p.eval(part, x);
        let obj = Objective { parts: p.parts(), eval: &eval };
        let m = obj.minimize(x_hat, &BfgsOptions { max_iterations: opts.max_iterations, tolerance: opts.tolerance });
        if m.converged && m.value.is_finite() {
            draws.push(p.layout.to_natural(&m.x));
        }
    }
    if draws.len() * 2 < b.max(2) {
        return Err(Error::UnusableCovariance(format!("only {} of {b} resamples converged", draws.len())));
    }
    Ok(sample_covariance(&draws))
}

fn sample_covariance(draws: &[Vec<f64>]) -> DMatrix<f64> {
    let m = draws.len() as f64;
    let p = draws[0].len();
    let mean: Vec<f64> = (0..p).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / m).collect();
    DMatrix::from_fn(p, p, |i, j| draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).sum::<f64>() / (m - 1.0))
}

/// Bootstrap covariance of a fit's estimates regardless of whether the
/// observed information was usable.
pub fn bootstrap_covariance(dataset: &TrialDataset, fit: &FitResult, opts: &FitOptions) -> Result<DMatrix<f64>> {
    let problem = Problem::new(dataset, &fit.skeleton);
    bootstrap(dataset, &problem, &fit.layout.to_internal(&fit.estimates), opts)
}

/// Negative Hessian of a log-likelihood by central differences, symmetric.
pub fn observed_information(loglik: impl Fn(&[f64]) -> f64, theta: &[f64]) -> Result<DMatrix<f64>> {
    let eval = |_: usize, x: &[f64]| -loglik(x);
    let obj = Objective { parts: vec![(0..theta.len()).collect()], eval: &eval };
    obj.hessian(theta).map(symmetrize).map_err(|(i, j)| Error::NonFiniteHessian(format!("theta[{i}]"), format!("theta[{j}]")))
}

/// Finite-difference scheme for derivatives of the risk difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// Two-point central difference.
    Central,
    /// Four-point (fourth-order) central difference.
    FivePoint,
}

/// Composite risk difference with its delta-method variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositeEstimate {
    pub delta_star: f64,
    pub variance: f64,
    pub standard_error: f64,
    /// Per-arm variance scale `var / (1/n_T + 1/n_C)`.
    pub sigma_sq: f64,
    /// Wald statistic `δ̂* / √var`.
    pub z: f64,
}

fn require_converged(fit: &FitResult) -> Result<()> {
    if fit.converged {
        Ok(())
    } else {
        Err(Error::Fit(format!("optimizer did not converge in {} iterations", fit.iterations)))
    }
}

/// Response probability of one arm under a resolved rule at natural-scale
/// parameters.
fn arm_probability(layout: &Layout, theta: &[f64], rule: &[Option<ResolvedCriterion>], arm: Arm) -> Result<f64> {
    let m = layout.model(theta);
    let mu = m.means(arm);
    let mut lower = Vec::with_capacity(rule.len());
    let mut upper = Vec::with_capacity(rule.len());
    for (i, c) in rule.iter().enumerate() {
        let (lo, hi) = match c {
            None => (f64::NEG_INFINITY, f64::INFINITY),
            Some(c) => c.interval(&m.cuts[i]),
        };
        lower.push((lo - mu[i]) / m.sd[i]);
        upper.push((hi - mu[i]) / m.sd[i]);
    }
    let corr = CorrelationMatrix::new(m.corr)?;
    Ok(mvn_rectangle(&lower, &upper, &vec![0.0; rule.len()], &corr, &MvnOptions::smooth())?.value)
}

fn resolve(fit: &FitResult, rule: &ResponderRule) -> Result<Vec<Option<ResolvedCriterion>>> {
    let resolved = rule.resolve(fit.skeleton.outcomes())?;
    if resolved.iter().all(Option::is_none) {
        return Err(Error::MissingResponderRule);
    }
    Ok(resolved)
}

fn delta_at(layout: &Layout, theta: &[f64], rule: &[Option<ResolvedCriterion>]) -> Result<f64> {
    Ok(arm_probability(layout, theta, rule, Arm::Treatment)? - arm_probability(layout, theta, rule, Arm::Control)?)
}

/// Model-based risk difference `P_T − P_C` at the fitted parameters.
/// Discrete thresholds of `rule` refer to the skeleton's cuts and follow
/// the corresponding fitted cuts.
pub fn delta_star(fit: &FitResult, rule: &ResponderRule) -> Result<f64> {
    require_converged(fit)?;
    delta_at(&fit.layout, &fit.estimates, &resolve(fit, rule)?)
}

/// Risk difference evaluated from unconstrained-scale parameters.
pub fn delta_star_internal(fit: &FitResult, rule: &ResponderRule) -> Result<f64> {
    require_converged(fit)?;
    let x = fit.layout.to_internal(&fit.estimates);
    delta_at(&fit.layout, &fit.layout.to_natural(&x), &resolve(fit, rule)?)
}

/// Gradient of the risk difference with respect to the natural-scale
/// parameters. Parameters the rule cannot see get exact zeros.
pub fn delta_gradient(fit: &FitResult, rule: &ResponderRule, stencil: Stencil) -> Result<Vec<f64>> {
    require_converged(fit)?;
    let resolved = resolve(fit, rule)?;
    let layout = &fit.layout;
    let involved: Vec<usize> = (0..layout.k).filter(|&i| resolved[i].is_some()).collect();
    let mut relevant = vec![false; layout.len()];
    for &i in &involved {
        for p in layout.outcome_params(i) {
            relevant[p] = true;
        }
        for &j in &involved {
            if i < j {
                relevant[layout.rho_index(i, j)] = true;
            }
        }
    }
    let theta = &fit.estimates;
    let mut grad = vec![0.0; theta.len()];
    for (arm, sign) in [(Arm::Treatment, 1.0), (Arm::Control, -1.0)] {
        for p in layout.arm_params(arm).into_iter().filter(|&p| relevant[p]) {
            let h = (1e-5 * theta[p].abs()).max(1e-5);
            let mut t = theta.clone();
            let mut at = |off: f64| -> Result<f64> {
                t[p] = theta[p] + off;
                arm_probability(layout, &t, &resolved, arm)
            };
            let d = match stencil {
                Stencil::Central => (at(h)? - at(-h)?) / (2.0 * h),
                Stencil::FivePoint => (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h),
            };
            grad[p] += sign * d;
        }
    }
    Ok(grad)
}

fn usable_covariance(fit: &FitResult) -> Result<&DMatrix<f64>> {
    fit.covariance.as_ref().ok_or_else(|| {
        Error::UnusableCovariance(fit.covariance_note.clone().unwrap_or_else(|| "no covariance available".into()))
    })
}

/// Delta-method variance `∇δᵀ Cov(θ̂) ∇δ`.
pub fn delta_variance(fit: &FitResult, rule: &ResponderRule) -> Result<f64> {
    let cov = usable_covariance(fit)?;
    let g = nalgebra::DVector::from_vec(delta_gradient(fit, rule, Stencil::Central)?);
    let v = g.dot(&(cov * &g));
    if v < 0.0 || !v.is_finite() {
        return Err(Error::NegativeVariance(v));
    }
    Ok(v)
}

pub fn composite_estimate(fit: &FitResult, rule: &ResponderRule) -> Result<CompositeEstimate> {
    let delta_star = delta_star(fit, rule)?;
    let variance = delta_variance(fit, rule)?;
    let se = variance.sqrt();
    let scale = 1.0 / fit.n_treatment as f64 + 1.0 / fit.n_control as f64;
    Ok(CompositeEstimate {
        delta_star,
        variance,
        standard_error: se,
        sigma_sq: variance / scale,
        z: if se > 0.0 { delta_star / se } else { 0.0 },
    })
}

/// One-sided Wald test of `δ* > 0`.
pub fn wald_test(fit: &FitResult, rule: &ResponderRule, alpha: f64) -> Result<bool> {
    let z = z_alpha(alpha)?;
    Ok(composite_estimate(fit, rule)?.z > z)
}
