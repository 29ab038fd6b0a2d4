//! Latent design: outcomes, arm means, correlation structure, ordinal
//! thresholds and the composite responder rule.
//!
//! Outcomes are stored in canonical order (continuous, ordinal, binary).
//! Discrete outcomes live on a unit-variance latent scale; binary outcomes
//! use the fixed cut at zero, so `P(Y = 1) = Φ(μ*)`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvn::{phi, phi_inv, smallest_eigenvalue, CorrelationMatrix};

/// Minimum eigenvalue a design's correlation matrix must exceed.
pub const PD_TOLERANCE: f64 = 1e-10;
/// Distance within which a discrete responder threshold matches a cut.
pub const CUT_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "T")]
    Treatment,
    #[serde(rename = "C")]
    Control,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Treatment => "T",
            Arm::Control => "C",
        }
    }
}

/// Cut-points `τ_1 < … < τ_w`; `τ_0 = -∞` and `τ_{w+1} = +∞` are implicit.
/// Category `j` is observed when `τ_j <= Y* < τ_{j+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalThresholds {
    pub cuts: Vec<f64>,
}

impl OrdinalThresholds {
    pub fn new(cuts: Vec<f64>) -> Result<Self> {
        let t = OrdinalThresholds { cuts };
        match t.problem() {
            Some(p) => Err(Error::Domain(p)),
            None => Ok(t),
        }
    }

    pub fn binary() -> Self {
        OrdinalThresholds { cuts: vec![0.0] }
    }

    pub fn levels(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Lower and upper latent limits of category `j`.
    pub fn band(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 { f64::NEG_INFINITY } else { self.cuts[j - 1] };
        let hi = if j >= self.cuts.len() { f64::INFINITY } else { self.cuts[j] };
        (lo, hi)
    }

    /// Category of a latent draw.
    pub fn categorize(&self, y: f64) -> u32 {
        self.cuts.partition_point(|&c| c <= y) as u32
    }

    fn problem(&self) -> Option<String> {
        if self.cuts.is_empty() {
            return Some("no thresholds".into());
        }
        if self.cuts.iter().any(|c| !c.is_finite()) {
            return Some("thresholds must be finite".into());
        }
        if self.cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Some("thresholds not increasing".into());
        }
        None
    }
}

/// Thresholds for a zero-mean, unit-variance latent variable reproducing the
/// given category probabilities.
pub fn thresholds_from_probs(category_probs: &[f64]) -> Result<OrdinalThresholds> {
    if category_probs.len() < 2 {
        return Err(Error::Domain("need at least two categories".into()));
    }
    if category_probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain("every category probability must be positive".into()));
    }
    let total: f64 = category_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("category probabilities sum to {total}, not 1")));
    }
    let mut cum = 0.0;
    let cuts = category_probs[..category_probs.len() - 1]
        .iter()
        .map(|p| {
            cum += p;
            phi_inv(cum)
        })
        .collect();
    OrdinalThresholds::new(cuts)
}

/// Latent effect `Φ⁻¹(π_T) − Φ⁻¹(π_C)` from two success proportions.
pub fn latent_effect_from_proportions(pi_t: f64, pi_c: f64) -> Result<f64> {
    for p in [pi_t, pi_c] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("proportion {p} must lie strictly inside (0, 1)")));
        }
    }
    Ok(phi_inv(pi_t) - phi_inv(pi_c))
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeKind {
    Continuous,
    Ordinal(OrdinalThresholds),
    Binary,
}

impl OutcomeKind {
    fn rank(&self) -> u8 {
        match self {
            OutcomeKind::Continuous => 0,
            OutcomeKind::Ordinal(_) => 1,
            OutcomeKind::Binary => 2,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, OutcomeKind::Continuous)
    }

    pub fn is_discrete(&self) -> bool {
        !self.is_continuous()
    }

    /// Latent cut-points; the fixed zero cut for binary, empty for continuous.
    pub fn thresholds(&self) -> Option<OrdinalThresholds> {
        match self {
            OutcomeKind::Continuous => None,
            OutcomeKind::Ordinal(t) => Some(t.clone()),
            OutcomeKind::Binary => Some(OrdinalThresholds::binary()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OutcomeKind::Continuous => "continuous",
            OutcomeKind::Ordinal(_) => "ordinal",
            OutcomeKind::Binary => "binary",
        }
    }
}

/// One endpoint. For discrete outcomes the means are latent (`μ*`) and the
/// standard deviation is fixed at one.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSpec {
    pub name: String,
    pub kind: OutcomeKind,
    pub sd: f64,
    pub mean_treatment: f64,
    pub mean_control: f64,
}

impl OutcomeSpec {
    pub fn continuous(name: &str, sd: f64, mean_treatment: f64, mean_control: f64) -> Self {
        OutcomeSpec { name: name.into(), kind: OutcomeKind::Continuous, sd, mean_treatment, mean_control }
    }

    pub fn ordinal(name: &str, thresholds: OrdinalThresholds, mean_treatment: f64, mean_control: f64) -> Self {
        OutcomeSpec { name: name.into(), kind: OutcomeKind::Ordinal(thresholds), sd: 1.0, mean_treatment, mean_control }
    }

    pub fn binary(name: &str, mean_treatment: f64, mean_control: f64) -> Self {
        OutcomeSpec { name: name.into(), kind: OutcomeKind::Binary, sd: 1.0, mean_treatment, mean_control }
    }

    /// Binary outcome from success proportions `P(Y = 1)` per arm.
    pub fn binary_from_proportions(name: &str, pi_t: f64, pi_c: f64) -> Result<Self> {
        latent_effect_from_proportions(pi_t, pi_c)?;
        Ok(Self::binary(name, phi_inv(pi_t), phi_inv(pi_c)))
    }

    pub fn mean(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treatment => self.mean_treatment,
            Arm::Control => self.mean_control,
        }
    }

    pub fn effect(&self) -> f64 {
        self.mean_treatment - self.mean_control
    }

    /// Effect in units of the outcome's standard deviation.
    pub fn standardized_effect(&self) -> f64 {
        self.effect() / self.sd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Response when the value is at or below the threshold.
    Below,
    /// Response when the value is above the threshold.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponderCriterion {
    /// Observed scale for continuous outcomes, latent scale for discrete
    /// ones (must coincide with a cut).
    pub threshold: f64,
    pub direction: Direction,
}

/// Conjunction rule: a patient responds when every listed criterion holds.
/// `None` entries do not take part in the rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponderRule {
    pub criteria: Vec<Option<ResponderCriterion>>,
}

/// A criterion tied to the outcome's scale: discrete thresholds become the
/// index of the matching cut, so they follow the cut when it is re-estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedCriterion {
    Continuous { threshold: f64, direction: Direction },
    /// Below: `Y <= cut` (latent below `cuts[cut]`); above: `Y >= cut + 1`.
    Discrete { cut: usize, direction: Direction },
}

impl ResolvedCriterion {
    /// Latent-scale interval of responders, given the current cut values.
    pub fn interval(&self, cuts: &[f64]) -> (f64, f64) {
        let (t, dir) = match *self {
            ResolvedCriterion::Continuous { threshold, direction } => (threshold, direction),
            ResolvedCriterion::Discrete { cut, direction } => (cuts[cut], direction),
        };
        match dir {
            Direction::Below => (f64::NEG_INFINITY, t),
            Direction::Above => (t, f64::INFINITY),
        }
    }

    /// Whether an observed value responds (category index for discrete).
    pub fn responds(&self, value: f64) -> bool {
        match *self {
            ResolvedCriterion::Continuous { threshold, direction: Direction::Below } => value <= threshold,
            ResolvedCriterion::Continuous { threshold, direction: Direction::Above } => value > threshold,
            ResolvedCriterion::Discrete { cut, direction: Direction::Below } => value <= cut as f64,
            ResolvedCriterion::Discrete { cut, direction: Direction::Above } => value >= (cut + 1) as f64,
        }
    }
}

impl ResponderRule {
    pub fn new(criteria: Vec<Option<ResponderCriterion>>) -> Self {
        ResponderRule { criteria }
    }

    pub fn resolve(&self, outcomes: &[OutcomeSpec]) -> Result<Vec<Option<ResolvedCriterion>>> {
        if self.criteria.len() != outcomes.len() {
            return Err(Error::Dimension(format!(
                "responder rule has {} entries for {} outcomes",
                self.criteria.len(),
                outcomes.len()
            )));
        }
        self.criteria
            .iter()
            .zip(outcomes)
            .map(|(c, o)| {
                let Some(c) = c else { return Ok(None) };
                match o.kind.thresholds() {
                    None => {
                        if c.threshold.is_nan() {
                            return Err(Error::Domain(format!("threshold for '{}' is NaN", o.name)));
                        }
                        Ok(Some(ResolvedCriterion::Continuous { threshold: c.threshold, direction: c.direction }))
                    }
                    Some(t) => t
                        .cuts
                        .iter()
                        .position(|&cut| (cut - c.threshold).abs() <= CUT_MATCH_TOLERANCE)
                        .map(|cut| Some(ResolvedCriterion::Discrete { cut, direction: c.direction }))
                        .ok_or_else(|| Error::MisalignedThreshold { outcome: o.name.clone(), threshold: c.threshold }),
                }
            })
            .collect()
    }
}

/// List of violated design invariants; empty means usable everywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.issues.push(msg.into());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentDesign {
    outcomes: Vec<OutcomeSpec>,
    correlations: DMatrix<f64>,
    responder_rule: Option<ResponderRule>,
    allocation: f64,
    permutation: Vec<usize>,
}

impl LatentDesign {
    /// Builds a design, reordering outcomes into canonical order.
    /// `correlations` and the rule follow the order of `outcomes` as given.
    pub fn new(
        outcomes: Vec<OutcomeSpec>,
        correlations: DMatrix<f64>,
        responder_rule: Option<ResponderRule>,
        allocation: f64,
    ) -> Result<Self> {
        let k = outcomes.len();
        if k == 0 {
            return Err(Error::Dimension("design needs at least one outcome".into()));
        }
        if correlations.nrows() != k || correlations.ncols() != k {
            return Err(Error::Dimension(format!(
                "correlation matrix is {}x{} for {k} outcomes",
                correlations.nrows(),
                correlations.ncols()
            )));
        }
        if let Some(r) = &responder_rule {
            if r.criteria.len() != k {
                return Err(Error::Dimension(format!("responder rule has {} entries for {k} outcomes", r.criteria.len())));
            }
        }
        for (i, o) in outcomes.iter().enumerate() {
            if outcomes[..i].iter().any(|p| p.name == o.name) {
                return Err(Error::Config(format!("duplicate outcome name '{}'", o.name)));
            }
        }
        let mut permutation: Vec<usize> = (0..k).collect();
        permutation.sort_by_key(|&i| outcomes[i].kind.rank());
        let outcomes_c = permutation.iter().map(|&i| outcomes[i].clone()).collect();
        let corr_c = DMatrix::from_fn(k, k, |i, j| correlations[(permutation[i], permutation[j])]);
        let rule_c = responder_rule.map(|r| ResponderRule { criteria: permutation.iter().map(|&i| r.criteria[i]).collect() });
        Ok(LatentDesign { outcomes: outcomes_c, correlations: corr_c, responder_rule: rule_c, allocation, permutation })
    }

    /// Convenience constructor from the row-major upper triangle.
    pub fn from_upper(
        outcomes: Vec<OutcomeSpec>,
        upper: &[f64],
        responder_rule: Option<ResponderRule>,
        allocation: f64,
    ) -> Result<Self> {
        let m = crate::mvn::matrix_from_upper(outcomes.len(), upper)?;
        Self::new(outcomes, m, responder_rule, allocation)
    }

    pub fn outcomes(&self) -> &[OutcomeSpec] {
        &self.outcomes
    }

    pub fn outcome(&self, k: usize) -> &OutcomeSpec {
        &self.outcomes[k]
    }

    pub fn k(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_continuous(&self) -> usize {
        self.outcomes.iter().filter(|o| o.kind.is_continuous()).count()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o.name == name)
    }

    /// Raw correlation parameters `ρ_kk'` in canonical order.
    pub fn correlations(&self) -> &DMatrix<f64> {
        &self.correlations
    }

    pub fn responder_rule(&self) -> Option<&ResponderRule> {
        self.responder_rule.as_ref()
    }

    /// Allocation ratio `κ = n_C / n_T`.
    pub fn allocation(&self) -> f64 {
        self.allocation
    }

    /// Canonical position `i` holds the outcome given at input position
    /// `permutation()[i]`.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn means(&self, arm: Arm) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.mean(arm)).collect()
    }

    pub fn sds(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.sd).collect()
    }

    /// Latent covariance `Σ = D R D` with `D = diag(σ)` (unit for discrete).
    pub fn sigma(&self) -> DMatrix<f64> {
        let sd = self.sds();
        DMatrix::from_fn(self.k(), self.k(), |i, j| self.correlations[(i, j)] * sd[i] * sd[j])
    }

    /// Correlation matrix Γ of the outcomes on the mixed observed/latent
    /// scale. Normalizing the continuous blocks of Σ by their standard
    /// deviations leaves exactly the ρ parameters.
    pub fn build_gamma(&self) -> Result<CorrelationMatrix> {
        self.ensure_valid()?;
        let k = self.k();
        let sigma = self.sigma();
        let sd = self.sds();
        CorrelationMatrix::new(DMatrix::from_fn(k, k, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => sigma[(i, j)] / sd[i] / sd[j],
            std::cmp::Ordering::Greater => sigma[(j, i)] / sd[j] / sd[i],
        }))
    }

    pub fn resolved_rule(&self) -> Result<Vec<Option<ResolvedCriterion>>> {
        self.responder_rule.as_ref().ok_or(Error::MissingResponderRule)?.resolve(&self.outcomes)
    }

    pub fn with_responder_rule(mut self, rule: Option<ResponderRule>) -> Result<Self> {
        if let Some(r) = &rule {
            if r.criteria.len() != self.k() {
                return Err(Error::Dimension("responder rule length".into()));
            }
        }
        self.responder_rule = rule;
        Ok(self)
    }

    /// Replaces one continuous outcome's standard deviation.
    pub fn with_sd(mut self, k: usize, sd: f64) -> Self {
        self.outcomes[k].sd = sd;
        self
    }

    pub fn with_means(mut self, k: usize, mean_treatment: f64, mean_control: f64) -> Self {
        self.outcomes[k].mean_treatment = mean_treatment;
        self.outcomes[k].mean_control = mean_control;
        self
    }

    pub fn with_allocation(mut self, allocation: f64) -> Self {
        self.allocation = allocation;
        self
    }

    /// Keeps only the listed outcomes (canonical indices, in order).
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let outcomes = idx.iter().map(|&i| self.outcomes[i].clone()).collect();
        let corr = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.correlations[(idx[i], idx[j])]);
        let rule = self.responder_rule.as_ref().map(|r| ResponderRule { criteria: idx.iter().map(|&i| r.criteria[i]).collect() });
        LatentDesign::new(outcomes, corr, rule, self.allocation)
    }

    /// Every violated invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let k = self.k();
        if self.outcomes.windows(2).any(|w| w[0].kind.rank() > w[1].kind.rank()) {
            report.push("outcomes not ordered continuous, ordinal, binary");
        }
        for o in &self.outcomes {
            if !o.mean_treatment.is_finite() || !o.mean_control.is_finite() {
                report.push(format!("'{}': arm means must be finite", o.name));
            }
            match &o.kind {
                OutcomeKind::Continuous => {
                    if !(o.sd > 0.0 && o.sd.is_finite()) {
                        report.push(format!("'{}': standard deviation must be positive", o.name));
                    }
                }
                kind => {
                    if o.sd != 1.0 {
                        report.push(format!("'{}': discrete outcomes have unit latent variance", o.name));
                    }
                    if let OutcomeKind::Ordinal(t) = kind {
                        if t.levels() < 3 {
                            report.push(format!("'{}': ordinal outcomes need at least 3 levels", o.name));
                        }
                        if let Some(p) = t.problem() {
                            report.push(format!("'{}': {p}", o.name));
                        }
                    }
                }
            }
        }
        let mut corr_ok = true;
        for i in 0..k {
            if (self.correlations[(i, i)] - 1.0).abs() > 1e-12 {
                report.push(format!("correlation diagonal {i} is not 1"));
                corr_ok = false;
            }
            for j in i + 1..k {
                let (a, b) = (self.correlations[(i, j)], self.correlations[(j, i)]);
                if (a - b).abs() > 1e-12 {
                    report.push(format!("correlation matrix not symmetric at ({i},{j})"));
                    corr_ok = false;
                }
                if !(a.abs() <= 1.0) {
                    report.push(format!(
                        "correlation out of range: rho({}, {}) = {a}",
                        self.outcomes[i].name, self.outcomes[j].name
                    ));
                    corr_ok = false;
                }
            }
        }
        if corr_ok {
            let lmin = smallest_eigenvalue(&self.correlations);
            if lmin <= PD_TOLERANCE {
                report.push(format!("correlation matrix not positive definite (smallest eigenvalue {lmin:.3e})"));
            }
        }
        if !(self.allocation > 0.0 && self.allocation.is_finite()) {
            report.push(format!("allocation ratio {} must be positive", self.allocation));
        }
        if let Some(rule) = &self.responder_rule {
            if let Err(e) = rule.resolve(&self.outcomes) {
                report.push(format!("responder rule: {e}"));
            } else if rule.criteria.iter().all(Option::is_none) {
                report.push("responder rule has no criteria");
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let r = self.validate();
        if r.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidDesign(r))
        }
    }
}

// ---------------------------------------------------------------------------
// JSON design files

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub outcomes: Vec<OutcomeConfig>,
    /// Row-major upper triangle in the order outcomes are listed.
    #[serde(default)]
    pub correlations: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub thresholds: std::collections::BTreeMap<String, ThresholdConfig>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub responder_rule: std::collections::BTreeMap<String, CriterionConfig>,
    #[serde(default = "default_allocation")]
    pub allocation: f64,
}

fn default_allocation() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindConfig {
    Continuous,
    Ordinal,
    Binary,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub name: String,
    pub kind: Option<KindConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_treatment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_control: Option<f64>,
    /// Success proportions `P(Y >= proportion_category)`; converted to
    /// latent means through Φ⁻¹.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportion_treatment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportion_control: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportion_category: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdConfig {
    Cuts { cuts: Vec<f64> },
    Probabilities { probabilities: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Discrete outcomes only: below ⇒ `Y <= category`, above ⇒ `Y >= category`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<usize>,
    pub direction: Direction,
}

impl DesignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("design file: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design config serializes")
    }

    pub fn build(&self) -> Result<LatentDesign> {
        let mut outcomes = Vec::with_capacity(self.outcomes.len());
        for oc in &self.outcomes {
            outcomes.push(self.build_outcome(oc)?);
        }
        let mut criteria = Vec::with_capacity(outcomes.len());
        for o in &outcomes {
            criteria.push(match self.responder_rule.get(&o.name) {
                None => None,
                Some(c) => Some(criterion_from_config(o, c)?),
            });
        }
        for name in self.responder_rule.keys().chain(self.thresholds.keys()) {
            if !outcomes.iter().any(|o| &o.name == name) {
                return Err(Error::Config(format!("unknown outcome '{name}'")));
            }
        }
        let rule = if self.responder_rule.is_empty() { None } else { Some(ResponderRule::new(criteria)) };
        LatentDesign::from_upper(outcomes, &self.correlations, rule, self.allocation)
    }

    fn build_outcome(&self, oc: &OutcomeConfig) -> Result<OutcomeSpec> {
        let kind = oc.kind.ok_or_else(|| Error::Config(format!("outcome '{}' has no kind", oc.name)))?;
        let thresholds = match (kind, self.thresholds.get(&oc.name)) {
            (KindConfig::Continuous, Some(_)) | (KindConfig::Binary, Some(_)) => {
                return Err(Error::Config(format!("thresholds given for non-ordinal outcome '{}'", oc.name)))
            }
            (KindConfig::Ordinal, None) => {
                return Err(Error::Config(format!("ordinal outcome '{}' needs thresholds", oc.name)))
            }
            (KindConfig::Ordinal, Some(ThresholdConfig::Cuts { cuts })) => Some(OrdinalThresholds { cuts: cuts.clone() }),
            (KindConfig::Ordinal, Some(ThresholdConfig::Probabilities { probabilities })) => {
                Some(thresholds_from_probs(probabilities)?)
            }
            _ => None,
        };
        if let (Some(t), Some(levels)) = (&thresholds, oc.levels) {
            if t.levels() != levels {
                return Err(Error::Config(format!(
                    "'{}' declares {levels} levels but has {} thresholds",
                    oc.name,
                    t.cuts.len()
                )));
            }
        }
        let means = match (oc.mean_treatment, oc.mean_control, oc.proportion_treatment, oc.proportion_control) {
            (Some(t), Some(c), None, None) => (t, c),
            (None, None, Some(pt), Some(pc)) => {
                if kind == KindConfig::Continuous {
                    return Err(Error::Config(format!("continuous outcome '{}' cannot use proportions", oc.name)));
                }
                latent_effect_from_proportions(pt, pc)?;
                // P(Y >= c) = Φ(μ* − τ_c)
                let shift = match (&thresholds, oc.proportion_category) {
                    (Some(t), Some(c)) if c >= 1 && c < t.levels() => t.cuts[c - 1],
                    (Some(_), _) => {
                        return Err(Error::Config(format!(
                            "ordinal '{}' needs proportion_category in 1..levels",
                            oc.name
                        )))
                    }
                    (None, _) => 0.0,
                };
                (shift + phi_inv(pt), shift + phi_inv(pc))
            }
            _ => {
                return Err(Error::Config(format!(
                    "outcome '{}' needs either mean_treatment/mean_control or proportion_treatment/proportion_control",
                    oc.name
                )))
            }
        };
        Ok(match kind {
            KindConfig::Continuous => {
                let sd = match (oc.sd, oc.variance) {
                    (Some(sd), None) => sd,
                    (None, Some(v)) => v.sqrt(),
                    _ => return Err(Error::Config(format!("continuous outcome '{}' needs exactly one of sd/variance", oc.name))),
                };
                OutcomeSpec::continuous(&oc.name, sd, means.0, means.1)
            }
            KindConfig::Ordinal => OutcomeSpec::ordinal(&oc.name, thresholds.expect("checked above"), means.0, means.1),
            KindConfig::Binary => OutcomeSpec::binary(&oc.name, means.0, means.1),
        })
    }

    /// Config describing `design` in canonical order with latent means.
    pub fn from_design(design: &LatentDesign) -> Self {
        let mut thresholds = std::collections::BTreeMap::new();
        let mut responder_rule = std::collections::BTreeMap::new();
        let outcomes = design
            .outcomes()
            .iter()
            .map(|o| {
                let (kind, sd, levels) = match &o.kind {
                    OutcomeKind::Continuous => (KindConfig::Continuous, Some(o.sd), None),
                    OutcomeKind::Ordinal(t) => {
                        thresholds.insert(o.name.clone(), ThresholdConfig::Cuts { cuts: t.cuts.clone() });
                        (KindConfig::Ordinal, None, Some(t.levels()))
                    }
                    OutcomeKind::Binary => (KindConfig::Binary, None, None),
                };
                OutcomeConfig {
                    name: o.name.clone(),
                    kind: Some(kind),
                    sd,
                    levels,
                    mean_treatment: Some(o.mean_treatment),
                    mean_control: Some(o.mean_control),
                    ..Default::default()
                }
            })
            .collect();
        if let Some(rule) = design.responder_rule() {
            for (o, c) in design.outcomes().iter().zip(&rule.criteria) {
                if let Some(c) = c {
                    responder_rule.insert(
                        o.name.clone(),
                        CriterionConfig { threshold: Some(c.threshold), category: None, direction: c.direction },
                    );
                }
            }
        }
        let k = design.k();
        let mut correlations = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                correlations.push(design.correlations()[(i, j)]);
            }
        }
        DesignConfig { outcomes, correlations, thresholds, responder_rule, allocation: design.allocation() }
    }
}

fn criterion_from_config(o: &OutcomeSpec, c: &CriterionConfig) -> Result<ResponderCriterion> {
    let threshold = match (c.threshold, c.category) {
        (Some(t), None) => t,
        (None, Some(cat)) => {
            let t = o
                .kind
                .thresholds()
                .ok_or_else(|| Error::Config(format!("category criterion on continuous outcome '{}'", o.name)))?;
            let idx = match c.direction {
                Direction::Below if cat + 1 < t.levels() => cat,
                Direction::Above if cat >= 1 && cat < t.levels() => cat - 1,
                _ => return Err(Error::Config(format!("category {cat} gives a trivial rule for '{}'", o.name))),
            };
            t.cuts[idx]
        }
        _ => return Err(Error::Config(format!("criterion for '{}' needs exactly one of threshold/category", o.name))),
    };
    Ok(ResponderCriterion { threshold, direction: c.direction })
}

/// Probability that a discrete outcome falls in each category under latent
/// mean `mu`.
pub fn category_probabilities(t: &OrdinalThresholds, mu: f64) -> Vec<f64> {
    (0..t.levels())
        .map(|j| {
            let (lo, hi) = t.band(j);
            crate::mvn::band(lo - mu, hi - mu)
        })
        .collect()
}

/// Success proportion `P(Y = 1)` of a binary outcome with latent mean `mu`.
pub fn binary_success(mu: f64) -> f64 {
    phi(mu)
}
