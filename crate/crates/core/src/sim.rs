//! Patient-level simulation from a latent design, responder derivation and
//! empirical power by simulate–analyse–test replication.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::endpoint::{Arm, DesignConfig, LatentDesign, OutcomeKind, ResolvedCriterion};
use crate::error::{Error, Result};
use crate::fit::{self, FitOptions};
use crate::mvn::{cholesky_lower, phi, phi_inv, pdf};
use crate::power::z_alpha;

/// Patient records: one arm label and K outcome values per row.
/// Discrete outcomes hold category indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    k: usize,
    arms: Vec<Arm>,
    values: Vec<f64>,
    pub seed: Option<u64>,
    pub design_hash: Option<String>,
}

impl TrialDataset {
    pub fn new(k: usize, arms: Vec<Arm>, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() != arms.len() * k {
            return Err(Error::Data(format!("{} values for {} rows of {k} outcomes", values.len(), arms.len())));
        }
        Ok(TrialDataset { k, arms, values, seed: None, design_hash: None })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arm(&self, i: usize) -> Arm {
        self.arms[i]
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn count(&self, arm: Arm) -> usize {
        self.arms.iter().filter(|&&a| a == arm).count()
    }

    /// Rows whose indices are listed (used for resampling).
    pub fn subset(&self, rows: &[usize]) -> TrialDataset {
        let mut values = Vec::with_capacity(rows.len() * self.k);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        TrialDataset {
            k: self.k,
            arms: rows.iter().map(|&i| self.arms[i]).collect(),
            values,
            seed: self.seed,
            design_hash: self.design_hash.clone(),
        }
    }

    /// Checks column kinds and ranges against a design.
    pub fn check_against(&self, design: &LatentDesign) -> Result<()> {
        if design.k() != self.k {
            return Err(Error::Data(format!("dataset has {} outcomes, design has {}", self.k, design.k())));
        }
        for arm in [Arm::Treatment, Arm::Control] {
            if self.count(arm) == 0 {
                return Err(Error::Data(format!("arm {} has no patients", arm.label())));
            }
        }
        for (j, o) in design.outcomes().iter().enumerate() {
            let levels = o.kind.thresholds().map(|t| t.levels());
            for i in 0..self.len() {
                let v = self.row(i)[j];
                if !v.is_finite() {
                    return Err(Error::Data(format!("row {}: non-finite value for '{}'", i + 1, o.name)));
                }
                if let Some(levels) = levels {
                    if v.fract() != 0.0 || v < 0.0 || v >= levels as f64 {
                        return Err(Error::Data(format!(
                            "row {}: '{}' must be a category in 0..{}, got {v}",
                            i + 1,
                            o.name,
                            levels - 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// CSV with header `arm,y1,...,yK`; provenance goes in leading `#`
    /// comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, design: Option<&LatentDesign>) -> Result<()> {
        if let Some(seed) = self.seed {
            writeln!(out, "# seed: {seed}")?;
        }
        if let Some(h) = &self.design_hash {
            writeln!(out, "# design: {h}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["arm".to_string()];
        header.extend((1..=self.k).map(|j| format!("y{j}")));
        w.write_record(&header)?;
        let discrete: Vec<bool> = match design {
            Some(d) => d.outcomes().iter().map(|o| o.kind.is_discrete()).collect(),
            None => vec![false; self.k],
        };
        for i in 0..self.len() {
            let mut rec = vec![self.arms[i].label().to_string()];
            for (j, &v) in self.row(i).iter().enumerate() {
                rec.push(if discrete[j] { format!("{}", v as i64) } else { format!("{v}") });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text)?;
        let mut seed = None;
        let mut design_hash = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some(v) = line.strip_prefix("# seed:") {
                seed = v.trim().parse().ok();
            } else if let Some(v) = line.strip_prefix("# design:") {
                design_hash = Some(v.trim().to_string());
            }
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.get(0) != Some("arm") || header.len() < 2 {
            return Err(Error::Data("CSV header must be arm,y1,...,yK".into()));
        }
        let k = header.len() - 1;
        let mut arms = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            arms.push(match rec.get(0) {
                Some("T") => Arm::Treatment,
                Some("C") => Arm::Control,
                other => return Err(Error::Data(format!("row {}: arm must be T or C, got {other:?}", line + 1))),
            });
            for j in 1..=k {
                let field = rec.get(j).unwrap_or("");
                values.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("row {}: '{field}' is not a number", line + 1)))?,
                );
            }
        }
        let mut ds = TrialDataset::new(k, arms, values)?;
        ds.seed = seed;
        ds.design_hash = design_hash;
        Ok(ds)
    }
}

/// Short digest of a design's canonical JSON form.
pub fn design_hash(design: &LatentDesign) -> String {
    let digest = Sha256::digest(DesignConfig::from_design(design).to_json().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `n_per_arm` treatment patients and `round(κ n)` control patients.
pub fn simulate(design: &LatentDesign, n_per_arm: usize, seed: u64) -> Result<TrialDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = simulate_with(design, n_per_arm, &mut rng)?;
    ds.seed = Some(seed);
    ds.design_hash = Some(design_hash(design));
    Ok(ds)
}

fn control_size(design: &LatentDesign, n: usize) -> usize {
    ((design.allocation() * n as f64).round() as usize).max(1)
}

pub(crate) fn simulate_with(design: &LatentDesign, n_per_arm: usize, rng: &mut ChaCha8Rng) -> Result<TrialDataset> {
    if n_per_arm == 0 {
        return Err(Error::Domain("need at least one patient per arm".into()));
    }
    let sampler = Sampler::new(design)?;
    let n_c = control_size(design, n_per_arm);
    let mut arms = Vec::with_capacity(n_per_arm + n_c);
    let mut values = Vec::with_capacity((n_per_arm + n_c) * design.k());
    for (arm, n) in [(Arm::Treatment, n_per_arm), (Arm::Control, n_c)] {
        for _ in 0..n {
            arms.push(arm);
            sampler.draw(arm, rng, &mut values);
        }
    }
    TrialDataset::new(design.k(), arms, values)
}

struct Sampler<'a> {
    design: &'a LatentDesign,
    chol: DMatrix<f64>,
    z: std::cell::RefCell<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(design: &'a LatentDesign) -> Result<Self> {
        let gamma = design.build_gamma()?;
        Ok(Sampler { design, chol: cholesky_lower(gamma.matrix())?, z: std::cell::RefCell::new(vec![0.0; design.k()]) })
    }

    fn draw(&self, arm: Arm, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let k = self.design.k();
        let mut z = self.z.borrow_mut();
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        for (i, o) in self.design.outcomes().iter().enumerate() {
            let mut e = 0.0;
            for j in 0..=i {
                e += self.chol[(i, j)] * z[j];
            }
            let y = o.mean(arm) + o.sd * e;
            out.push(match &o.kind {
                OutcomeKind::Continuous => y,
                OutcomeKind::Ordinal(t) => t.categorize(y) as f64,
                OutcomeKind::Binary => (y >= 0.0) as u8 as f64,
            });
        }
        debug_assert_eq!(out.len() % k, 0);
    }
}

/// Composite responder indicator `S_i` under the design's rule.
pub fn derive_responders(dataset: &TrialDataset, design: &LatentDesign) -> Result<Vec<bool>> {
    let rule = design.resolved_rule()?;
    derive_responders_resolved(dataset, &rule)
}

pub fn derive_responders_resolved(dataset: &TrialDataset, rule: &[Option<ResolvedCriterion>]) -> Result<Vec<bool>> {
    if rule.len() != dataset.k() {
        return Err(Error::Dimension(format!("rule has {} entries for {} columns", rule.len(), dataset.k())));
    }
    Ok((0..dataset.len())
        .map(|i| dataset.row(i).iter().zip(rule).all(|(&v, c)| c.is_none_or(|c| c.responds(v))))
        .collect())
}

/// Which test an empirical power study applies to each replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Latent-scale test on one outcome.
    Individual(usize),
    /// Every latent-scale test rejects.
    Coprimary,
    /// At least one latent-scale test rejects.
    Multiprimary,
    /// Wald test on the model-based risk difference.
    Composite,
    /// Pooled two-proportion z-test on the responder indicator.
    BinaryStandard,
}

/// Per-outcome latent-scale Wald statistics for a treatment effect, plus
/// the number of continuity corrections applied.
pub fn latent_statistics(dataset: &TrialDataset, design: &LatentDesign) -> Result<(Vec<f64>, usize)> {
    dataset.check_against(design)?;
    let mut corrections = 0;
    let mut stats = Vec::with_capacity(design.k());
    for (j, o) in design.outcomes().iter().enumerate() {
        let col = |arm: Arm| -> Vec<f64> {
            (0..dataset.len()).filter(|&i| dataset.arm(i) == arm).map(|i| dataset.row(i)[j]).collect()
        };
        let (t, c) = (col(Arm::Treatment), col(Arm::Control));
        let z = match &o.kind {
            OutcomeKind::Continuous => pooled_z(&t, &c),
            OutcomeKind::Binary => {
                let (mt, vt, ct) = probit_proportion(&t);
                let (mc, vc, cc) = probit_proportion(&c);
                corrections += ct as usize + cc as usize;
                (mt - mc) / (vt + vc).sqrt()
            }
            OutcomeKind::Ordinal(th) => {
                let counts = |v: &[f64]| {
                    let mut n = vec![0.0; th.levels()];
                    for &x in v {
                        n[x as usize] += 1.0;
                    }
                    n
                };
                let m = fit::ordinal_shift(&counts(&t), &counts(&c))?;
                corrections += m.corrections;
                m.shift / m.se
            }
        };
        stats.push(z);
    }
    Ok((stats, corrections))
}

fn pooled_z(t: &[f64], c: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mt, mc) = (mean(t), mean(c));
    let ss = t.iter().map(|x| (x - mt).powi(2)).sum::<f64>() + c.iter().map(|x| (x - mc).powi(2)).sum::<f64>();
    let df = (t.len() + c.len()).saturating_sub(2).max(1) as f64;
    let s2 = ss / df;
    (mt - mc) / (s2 * (1.0 / t.len() as f64 + 1.0 / c.len() as f64)).sqrt()
}

/// `Φ⁻¹(p̂)` and its delta-method variance; zero cells get half a success
/// and half a failure.
fn probit_proportion(v: &[f64]) -> (f64, f64, bool) {
    let n = v.len() as f64;
    let x = v.iter().sum::<f64>();
    let corrected = x == 0.0 || x == n;
    let p = if corrected { (x + 0.5) / (n + 1.0) } else { x / n };
    let m = phi_inv(p);
    let dens = pdf(m);
    (m, p * (1.0 - p) / (n * dens * dens), corrected)
}

/// Pooled two-proportion z statistic for `p_T − p_C`.
pub fn two_proportion_z(responders: &[bool], arms: &[Arm]) -> f64 {
    let mut x = [0.0; 2];
    let mut n = [0.0; 2];
    for (&s, &a) in responders.iter().zip(arms) {
        let i = (a == Arm::Control) as usize;
        n[i] += 1.0;
        x[i] += s as u8 as f64;
    }
    let pbar = (x[0] + x[1]) / (n[0] + n[1]);
    let se = (pbar * (1.0 - pbar) * (1.0 / n[0] + 1.0 / n[1])).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (x[0] / n[0] - x[1] / n[1]) / se
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPowerReport {
    pub test: TestKind,
    pub n_per_arm: usize,
    pub alpha: f64,
    pub rejections: usize,
    /// Replications that produced a test decision.
    pub replications: usize,
    pub attempted: usize,
    pub failures: usize,
    pub estimate: f64,
    pub mc_standard_error: f64,
    pub continuity_corrections: usize,
    pub fits_converged: usize,
}

impl EmpiricalPowerReport {
    fn from_outcomes(test: TestKind, n: usize, alpha: f64, outcomes: &[Replication]) -> Result<Self> {
        let attempted = outcomes.len();
        let failures = outcomes.iter().filter(|o| o.reject.is_none()).count();
        if failures * 20 > attempted {
            return Err(Error::TooManyFitFailures { failed: failures, attempted });
        }
        let replications = attempted - failures;
        let rejections = outcomes.iter().filter(|o| o.reject == Some(true)).count();
        let p = rejections as f64 / replications.max(1) as f64;
        Ok(EmpiricalPowerReport {
            test,
            n_per_arm: n,
            alpha,
            rejections,
            replications,
            attempted,
            failures,
            estimate: p,
            mc_standard_error: (p * (1.0 - p) / replications.max(1) as f64).sqrt(),
            continuity_corrections: outcomes.iter().map(|o| o.corrections).sum(),
            fits_converged: outcomes.iter().filter(|o| o.converged).count(),
        })
    }
}

struct Replication {
    reject: Option<bool>,
    corrections: usize,
    converged: bool,
}

/// Random stream for one replication: independent of every other
/// replication and of evaluation order.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Settings shared by the simulation studies.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub replications: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl StudyOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        StudyOptions { replications, seed, fit: FitOptions::default() }
    }
}

fn check_replications(r: usize) -> Result<()> {
    if r < 100 {
        return Err(Error::Domain(format!("need at least 100 replications, got {r}")));
    }
    Ok(())
}

pub fn empirical_power(
    design: &LatentDesign,
    n_per_arm: usize,
    alpha: f64,
    test: TestKind,
    study: &StudyOptions,
) -> Result<EmpiricalPowerReport> {
    check_replications(study.replications)?;
    design.ensure_valid()?;
    let z = z_alpha(alpha)?;
    let rule = match test {
        TestKind::Composite | TestKind::BinaryStandard => Some(design.resolved_rule()?),
        _ => None,
    };
    if let TestKind::Individual(k) = test {
        if k >= design.k() {
            return Err(Error::Dimension(format!("outcome index {k} out of range")));
        }
    }
    let outcomes: Vec<Result<Replication>> = (0..study.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(study.seed, r as u64);
            let data = simulate_with(design, n_per_arm, &mut rng)?;
            Ok(match test {
                TestKind::Individual(_) | TestKind::Coprimary | TestKind::Multiprimary => {
                    let (stats, corrections) = latent_statistics(&data, design)?;
                    let reject = match test {
                        TestKind::Individual(k) => stats[k] > z,
                        TestKind::Coprimary => stats.iter().all(|&s| s > z),
                        _ => stats.iter().any(|&s| s > z),
                    };
                    Replication { reject: Some(reject), corrections, converged: false }
                }
                TestKind::BinaryStandard => {
                    let s = derive_responders_resolved(&data, rule.as_deref().expect("rule resolved"))?;
                    Replication { reject: Some(two_proportion_z(&s, data.arms()) > z), corrections: 0, converged: false }
                }
                TestKind::Composite => {
                    let mut opts = study.fit.clone();
                    opts.seed = study.fit.seed ^ r as u64;
                    match fit::fit(&data, design, &opts).and_then(|f| {
                        let c = fit::composite_estimate(&f, design.responder_rule().expect("rule"))?;
                        Ok((c.z > z, f.converged))
                    }) {
                        Ok((reject, converged)) => Replication { reject: Some(reject), corrections: 0, converged },
                        Err(e) if e.is_input_error() && !matches!(e, Error::Data(_)) => return Err(e),
                        Err(_) => Replication { reject: None, corrections: 0, converged: false },
                    }
                }
            })
        })
        .collect();
    let outcomes: Vec<Replication> = outcomes.into_iter().collect::<Result<_>>()?;
    EmpiricalPowerReport::from_outcomes(test, n_per_arm, alpha, &outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub n_per_arm: usize,
    pub median_sigma_sq: f64,
    pub median_delta_star: f64,
    pub fitted: usize,
    pub failures: usize,
}

/// Median of the per-dataset `σ² = var(δ̂*) / (1/n_T + 1/n_C)` over
/// simulated pilot trials.
pub fn calibrate_sigma(design: &LatentDesign, n_per_arm: usize, study: &StudyOptions) -> Result<CalibrationReport> {
    check_replications(study.replications)?;
    let rule = design.responder_rule().ok_or(Error::MissingResponderRule)?.clone();
    let results: Vec<Result<Option<(f64, f64)>>> = (0..study.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(study.seed, r as u64);
            let data = simulate_with(design, n_per_arm, &mut rng)?;
            let mut opts = study.fit.clone();
            opts.seed = study.fit.seed ^ r as u64;
            match fit::fit(&data, design, &opts).and_then(|f| fit::composite_estimate(&f, &rule)) {
                Ok(c) => Ok(Some((c.sigma_sq, c.delta_star))),
                Err(e) if e.is_input_error() && !matches!(e, Error::Data(_)) => Err(e),
                Err(_) => Ok(None),
            }
        })
        .collect();
    let results: Vec<Option<(f64, f64)>> = results.into_iter().collect::<Result<_>>()?;
    let failures = results.iter().filter(|r| r.is_none()).count();
    if failures * 20 > results.len() {
        return Err(Error::TooManyFitFailures { failed: failures, attempted: results.len() });
    }
    let mut sig: Vec<f64> = results.iter().flatten().map(|r| r.0).collect();
    let mut dl: Vec<f64> = results.iter().flatten().map(|r| r.1).collect();
    Ok(CalibrationReport {
        n_per_arm,
        median_sigma_sq: median(&mut sig),
        median_delta_star: median(&mut dl),
        fitted: sig.len(),
        failures,
    })
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Expected responder frequency of a binary latent mean (used in checks).
pub fn expected_rate(mu: f64) -> f64 {
    phi(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoint::{Direction, OutcomeSpec, ResponderCriterion, ResponderRule};

    fn small_design() -> LatentDesign {
        LatentDesign::from_upper(
            vec![
                OutcomeSpec::continuous("c", 2.0, 0.5, 0.0),
                OutcomeSpec::ordinal("o", crate::endpoint::thresholds_from_probs(&[0.3, 0.4, 0.3]).unwrap(), 0.2, 0.0),
                OutcomeSpec::binary_from_proportions("b", 0.5, 0.4).unwrap(),
            ],
            &[0.3, 0.2, 0.1],
            Some(ResponderRule::new(vec![
                None,
                None,
                Some(ResponderCriterion { threshold: 0.0, direction: Direction::Above }),
            ])),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_bytes() {
        let d = small_design();
        let a = simulate(&d, 50, 7).unwrap();
        let b = simulate(&d, 50, 7).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.write_csv(&mut wa, Some(&d)).unwrap();
        b.write_csv(&mut wb, Some(&d)).unwrap();
        assert_eq!(wa, wb);
        assert_ne!(simulate(&d, 50, 8).unwrap(), a);
    }

    #[test]
    fn csv_round_trip() {
        let d = small_design();
        let a = simulate(&d, 20, 3).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf, Some(&d)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().any(|l| l == "arm,y1,y2,y3"));
        let b = TrialDataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a, b);
        b.check_against(&d).unwrap();
    }

    #[test]
    fn binary_column_is_the_responder_indicator() {
        let d = small_design();
        let data = simulate(&d, 100, 11).unwrap();
        let s = derive_responders(&data, &d).unwrap();
        for (i, &si) in s.iter().enumerate() {
            assert_eq!(si, data.row(i)[2] == 1.0);
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn replication_streams_differ() {
        use rand::Rng;
        let a: u64 = replication_rng(5, 0).random();
        let b: u64 = replication_rng(5, 1).random();
        assert_ne!(a, b);
        let again: u64 = replication_rng(5, 1).random();
        assert_eq!(b, again);
    }
}
