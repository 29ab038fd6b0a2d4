//! Subcommand implementations. Each returns the rendered output and a list
//! of failed checks; the binary maps errors to exit codes.

use std::path::PathBuf;

use mixendpoint::endpoint::{Arm, OutcomeKind};
use mixendpoint::error::{Error, Result};
use mixendpoint::fit::{self, FitOptions};
use mixendpoint::mvn::MvnOptions;
use mixendpoint::power::{self, CompositeSummary, PowerQuery};
use mixendpoint::sample_size::{self, EndpointType};
use mixendpoint::sim::{self, StudyOptions, TestKind, TrialDataset};
use serde_json::Value;

use crate::output::{Cell, Format, Table};
use crate::reproduce::{self, ReproduceOptions, Target};
use crate::scenario::Scenario;

pub const DEFAULT_REPLICATIONS: usize = 1000;
pub const DEFAULT_SEED: u64 = 20260;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub alpha: Option<f64>,
    pub two_sided: bool,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub accuracy: Option<f64>,
    pub data: Option<PathBuf>,
    pub sigma_sq: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Output {
    pub text: String,
    pub failures: Vec<String>,
}

impl Output {
    fn table(t: &Table, format: Format) -> Result<Self> {
        Ok(Output { text: t.render(format)?, failures: Vec::new() })
    }
}

fn scenario(flags: &Flags) -> Result<Scenario> {
    let path = flags.scenario.as_ref().ok_or_else(|| Error::Config("--scenario is required".into()))?;
    Scenario::load(path)
}

fn mvn_options(s: &Scenario, flags: &Flags) -> MvnOptions {
    let mut o = MvnOptions::default();
    if let Some(a) = flags.accuracy.or(s.analysis.accuracy) {
        o = o.with_accuracy(a);
    }
    o
}

fn seed(s: Option<&Scenario>, flags: &Flags) -> u64 {
    flags.seed.or(s.and_then(|s| s.analysis.seed)).unwrap_or(DEFAULT_SEED)
}

fn reps(s: &Scenario, flags: &Flags) -> usize {
    flags.reps.or(s.analysis.replications).unwrap_or(DEFAULT_REPLICATIONS)
}

pub fn validate(flags: &Flags) -> Result<Output> {
    let s = scenario(flags)?;
    let mut t = Table::new(&["outcome", "kind", "levels", "mean_treatment", "mean_control", "sd", "in_rule"]);
    let rule = s.design.responder_rule();
    for (i, o) in s.design.outcomes().iter().enumerate() {
        let levels = match &o.kind {
            OutcomeKind::Continuous => Cell::Text(String::new()),
            k => k.thresholds().map(|t| Cell::from(t.levels())).unwrap_or(Cell::Text(String::new())),
        };
        t.push(vec![
            o.name.as_str().into(),
            o.kind.name().into(),
            levels,
            o.mean(Arm::Treatment).into(),
            o.mean(Arm::Control).into(),
            o.sd.into(),
            rule.is_some_and(|r| r.criteria[i].is_some()).into(),
        ]);
    }
    Output::table(&t, flags.format)
}

/// Per-outcome names paired with their index, for `individual` rows.
fn individual_rows(s: &Scenario) -> Vec<(usize, String)> {
    s.design.outcomes().iter().enumerate().map(|(k, o)| (k, format!("individual:{}", o.name))).collect()
}

fn composite_summary(s: &Scenario, flags: &Flags) -> Result<CompositeSummary> {
    let delta = match s.analysis.delta_star {
        Some(d) => d,
        None => power::design_delta_star(&s.design, &MvnOptions::smooth())?,
    };
    let sigma_sq = match (flags.sigma_sq.or(s.analysis.sigma_sq), s.analysis.pilot_n) {
        (Some(v), _) => v,
        (None, Some(pilot)) => {
            let study = StudyOptions::new(reps(s, flags), seed(Some(s), flags));
            sim::calibrate_sigma(&s.design, pilot, &study)?.median_sigma_sq
        }
        (None, None) => return Err(Error::Config("composite analysis needs sigma_sq or pilot_n".into())),
    };
    CompositeSummary::new(delta, sigma_sq)
}

fn binary_proportions(s: &Scenario) -> Result<(f64, f64)> {
    if let Some([pt, pc]) = s.analysis.proportions {
        return Ok((pt, pc));
    }
    let o = MvnOptions::smooth();
    Ok((
        power::response_probability(&s.design, Arm::Treatment, &o)?.value,
        power::response_probability(&s.design, Arm::Control, &o)?.value,
    ))
}

pub fn power(flags: &Flags) -> Result<Output> {
    let s = scenario(flags)?;
    let alpha = s.one_sided_alpha(flags.alpha, flags.two_sided);
    let sizes = s.sizes()?;
    let opts = mvn_options(&s, flags);
    let mut t = Table::new(&["endpoint", "n", "power", "error"]);
    for &ep in &s.analysis.endpoint_types {
        match ep {
            EndpointType::Individual => {
                for (k, name) in individual_rows(&s) {
                    for &n in &sizes {
                        t.push(vec![name.as_str().into(), n.into(), power::power_individual(&s.design, k, n, alpha)?.into(), 0.0.into()]);
                    }
                }
            }
            EndpointType::Coprimary | EndpointType::Multiprimary => {
                for &n in &sizes {
                    let q = PowerQuery::new(&s.design, n, alpha)?;
                    let p = if ep == EndpointType::Coprimary {
                        power::power_coprimary(&q, &opts)?
                    } else {
                        power::power_multiprimary(&q, &opts)?
                    };
                    t.push(vec![ep.as_str().into(), n.into(), p.power.into(), p.error.into()]);
                }
            }
            EndpointType::Composite => {
                let summary = composite_summary(&s, flags)?;
                for &n in &sizes {
                    let p = power::power_composite_allocated(&summary, n, s.design.allocation(), alpha)?;
                    t.push(vec![ep.as_str().into(), n.into(), p.into(), 0.0.into()]);
                }
            }
            EndpointType::BinaryStandard => {
                let (pt, pc) = binary_proportions(&s)?;
                for &n in &sizes {
                    t.push(vec![ep.as_str().into(), n.into(), power::power_binary_standard(pt, pc, n, alpha)?.into(), 0.0.into()]);
                }
            }
        }
    }
    Output::table(&t, flags.format)
}

pub fn samplesize(flags: &Flags) -> Result<Output> {
    let s = scenario(flags)?;
    let alpha = s.one_sided_alpha(flags.alpha, flags.two_sided);
    let target = s.target_power()?;
    let opts = mvn_options(&s, flags);
    let mut t = Table::new(&["endpoint", "n", "achieved_power"]);
    for &ep in &s.analysis.endpoint_types {
        let rows: Vec<(String, sample_size::SampleSizeResult)> = match ep {
            EndpointType::Individual => individual_rows(&s)
                .into_iter()
                .map(|(k, name)| Ok((name, sample_size::n_individual_in_design(&s.design, k, alpha, target)?)))
                .collect::<Result<_>>()?,
            EndpointType::Coprimary => vec![(ep.to_string(), sample_size::n_coprimary(&s.design, alpha, target, &opts)?)],
            EndpointType::Multiprimary => {
                vec![(ep.to_string(), sample_size::n_multiprimary(&s.design, alpha, target, &opts)?)]
            }
            EndpointType::Composite => {
                let c = composite_summary(&s, flags)?;
                vec![(ep.to_string(), sample_size::n_composite(c.delta_star, c.sigma_sq, alpha, target)?)]
            }
            EndpointType::BinaryStandard => {
                let (pt, pc) = binary_proportions(&s)?;
                vec![(ep.to_string(), sample_size::n_binary_standard(pt, pc, alpha, target)?)]
            }
        };
        for (name, r) in rows {
            t.push(vec![name.into(), r.n.into(), r.achieved_power.into()]);
        }
    }
    Output::table(&t, flags.format)
}

pub fn simulate(flags: &Flags) -> Result<Output> {
    let s = scenario(flags)?;
    let n = s.single_n()?;
    let data = sim::simulate(&s.design, n as usize, seed(Some(&s), flags))?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf, Some(&s.design))?;
    Ok(Output { text: String::from_utf8(buf).expect("csv output is utf-8"), failures: Vec::new() })
}

/// Rounds every number in a JSON tree to six significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => n
            .as_f64()
            .and_then(|x| mixendpoint::format::sig6(x).parse::<f64>().ok())
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

pub fn fit(flags: &Flags) -> Result<Output> {
    let s = scenario(flags)?;
    let path = match (&flags.data, &s.analysis.dataset) {
        (Some(p), _) => p.clone(),
        (None, Some(rel)) => s.resolve(rel),
        (None, None) => return Err(Error::Config("no dataset: pass --data or set analysis.dataset".into())),
    };
    let file = std::fs::File::open(&path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let data = TrialDataset::read_csv(file)?;
    let opts = FitOptions { seed: seed(Some(&s), flags), ..FitOptions::default() };
    let result = fit::fit(&data, &s.design, &opts)?;
    let alpha = s.one_sided_alpha(flags.alpha, flags.two_sided);
    let composite = match s.design.responder_rule() {
        Some(rule) if result.converged => {
            let c = fit::composite_estimate(&result, rule)?;
            Some((c, c.z > power::z_alpha(alpha)?))
        }
        _ => None,
    };
    match flags.format {
        Format::Json => {
            let mut v = serde_json::to_value(result.report())?;
            if let Some((c, reject)) = composite {
                v["composite"] = serde_json::json!({
                    "delta_star": c.delta_star,
                    "variance": c.variance,
                    "standard_error": c.standard_error,
                    "sigma_sq": c.sigma_sq,
                    "z": c.z,
                    "alpha": alpha,
                    "reject": reject,
                });
            }
            Ok(Output { text: serde_json::to_string_pretty(&round_json(v))? + "\n", failures: Vec::new() })
        }
        Format::Csv => {
            let mut t = Table::new(&["parameter", "estimate", "standard_error"]);
            let se = result.standard_errors();
            for (i, name) in result.names.iter().enumerate() {
                let e = se.as_ref().map(|s| Cell::from(s[i])).unwrap_or_else(|| "".into());
                t.push(vec![name.as_str().into(), result.estimates[i].into(), e]);
            }
            t.push(vec!["log_likelihood".into(), result.log_likelihood.into(), "".into()]);
            t.push(vec!["converged".into(), Cell::Bool(result.converged), "".into()]);
            if let Some((c, _)) = composite {
                t.push(vec!["delta_star".into(), c.delta_star.into(), c.standard_error.into()]);
                t.push(vec!["sigma_sq".into(), c.sigma_sq.into(), "".into()]);
                t.push(vec!["z".into(), c.z.into(), "".into()]);
            }
            Output::table(&t, flags.format)
        }
    }
}

pub fn empirical(flags: &Flags) -> Result<Output> {
    let s = scenario(flags)?;
    let alpha = s.one_sided_alpha(flags.alpha, flags.two_sided);
    let study = StudyOptions::new(reps(&s, flags), seed(Some(&s), flags));
    let mut tests: Vec<(String, TestKind)> = Vec::new();
    for &ep in &s.analysis.endpoint_types {
        match ep {
            EndpointType::Individual => {
                tests.extend(individual_rows(&s).into_iter().map(|(k, name)| (name, TestKind::Individual(k))))
            }
            EndpointType::Coprimary => tests.push((ep.to_string(), TestKind::Coprimary)),
            EndpointType::Multiprimary => tests.push((ep.to_string(), TestKind::Multiprimary)),
            EndpointType::Composite => tests.push((ep.to_string(), TestKind::Composite)),
            EndpointType::BinaryStandard => tests.push((ep.to_string(), TestKind::BinaryStandard)),
        }
    }
    let mut t = Table::new(&[
        "test",
        "n",
        "replications",
        "failures",
        "rejections",
        "power",
        "mc_se",
        "continuity_corrections",
        "fits_converged",
    ]);
    for n in s.sizes()? {
        for (name, kind) in &tests {
            let r = sim::empirical_power(&s.design, n as usize, alpha, *kind, &study)?;
            t.push(vec![
                name.as_str().into(),
                n.into(),
                r.replications.into(),
                r.failures.into(),
                r.rejections.into(),
                r.estimate.into(),
                r.mc_standard_error.into(),
                r.continuity_corrections.into(),
                r.fits_converged.into(),
            ]);
        }
    }
    Output::table(&t, flags.format)
}

pub fn reproduce(target: Target, flags: &Flags) -> Result<Output> {
    let mut opts = ReproduceOptions { seed: flags.seed.unwrap_or(DEFAULT_SEED), replications: flags.reps, ..Default::default() };
    if let Some(a) = flags.accuracy {
        opts.mvn = opts.mvn.with_accuracy(a);
    }
    if let Some(v) = flags.sigma_sq {
        opts.figure_sigma_sq = v;
    }
    let r = reproduce::run(target, &opts)?;
    Ok(Output { text: r.table.render(flags.format)?, failures: r.failures })
}
