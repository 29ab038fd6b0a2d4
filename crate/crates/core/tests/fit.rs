mod common;

use common::{cdf_oracle, muse};
use mixendpoint::endpoint::*;
use mixendpoint::fit::{self, CovarianceSource, FitOptions, Stencil};
use mixendpoint::mvn::MvnOptions;
use mixendpoint::power;
use mixendpoint::sim::{self, StudyOptions, TestKind, TrialDataset};

fn above(threshold: f64) -> Option<ResponderCriterion> {
    Some(ResponderCriterion { threshold, direction: Direction::Above })
}

fn table2() -> LatentDesign {
    DesignConfig::load(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/fixtures/composite_table2.json")))
        .unwrap()
        .build()
        .unwrap()
}

fn pair_design(effect: f64) -> LatentDesign {
    LatentDesign::from_upper(
        vec![OutcomeSpec::continuous("c", 1.0, effect, 0.0), OutcomeSpec::binary("b", -0.25 + effect, -0.25)],
        &[0.5],
        Some(ResponderRule::new(vec![above(0.0), above(0.0)])),
        1.0,
    )
    .unwrap()
}

fn mixed_design() -> LatentDesign {
    LatentDesign::from_upper(
        vec![
            OutcomeSpec::continuous("c", 2.0, 0.6, 0.0),
            OutcomeSpec::ordinal("o", thresholds_from_probs(&[0.2, 0.3, 0.3, 0.2]).unwrap(), 0.3, 0.0),
            OutcomeSpec::binary("b", 0.2, -0.2),
        ],
        &[0.4, 0.3, 0.35],
        Some(ResponderRule::new(vec![above(0.0), None, above(0.0)])),
        1.0,
    )
    .unwrap()
}

fn single_binary(pt: f64, pc: f64) -> LatentDesign {
    LatentDesign::from_upper(
        vec![OutcomeSpec::binary_from_proportions("b", pt, pc).unwrap()],
        &[],
        Some(ResponderRule::new(vec![above(0.0)])),
        1.0,
    )
    .unwrap()
}

/// Same rows in both arms, so every fitted arm contrast is zero.
fn mirrored(data: &TrialDataset) -> TrialDataset {
    let rows: Vec<usize> = (0..data.len()).filter(|&i| data.arm(i) == Arm::Control).collect();
    let mut arms = Vec::new();
    let mut values = Vec::new();
    for arm in [Arm::Treatment, Arm::Control] {
        for &i in &rows {
            arms.push(arm);
            values.extend_from_slice(data.row(i));
        }
    }
    TrialDataset::new(data.k(), arms, values).unwrap()
}

fn true_parameters(d: &LatentDesign) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for o in d.outcomes() {
        // ordinal control means are pinned at zero, so the treatment mean and cuts are relative to it
        let shift = if o.kind.is_continuous() || o.kind == OutcomeKind::Binary { 0.0 } else { o.mean_control };
        out.push((format!("{}.mean_T", o.name), o.mean_treatment - shift));
        match &o.kind {
            OutcomeKind::Continuous => {
                out.push((format!("{}.mean_C", o.name), o.mean_control));
                out.push((format!("{}.sd", o.name), o.sd));
            }
            OutcomeKind::Ordinal(t) => {
                for (j, c) in t.cuts.iter().enumerate() {
                    out.push((format!("{}.cut{}", o.name, j + 1), c - shift));
                }
            }
            OutcomeKind::Binary => out.push((format!("{}.mean_C", o.name), o.mean_control)),
        }
    }
    let k = d.k();
    for i in 0..k {
        for j in i + 1..k {
            out.push((format!("rho({},{})", d.outcome(i).name, d.outcome(j).name), d.correlations()[(i, j)]));
        }
    }
    out
}

#[test]
fn recovers_parameters_at_large_n() {
    let d = muse();
    let data = sim::simulate(&d, 5000, 99).unwrap();
    let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
    assert!(f.converged);
    assert_eq!(f.covariance_source, CovarianceSource::ObservedInformation);
    let se = f.standard_errors().unwrap();
    for (name, truth) in true_parameters(&d) {
        let i = f.names.iter().position(|n| *n == name).unwrap_or_else(|| panic!("no parameter {name}"));
        let err = (f.estimates[i] - truth).abs();
        assert!(err <= 3.0 * se[i], "{name}: {} vs {truth} (se {})", f.estimates[i], se[i]);
        if name.starts_with("rho") {
            assert!(err <= 0.05, "{name}");
        }
    }
}

#[test]
fn single_binary_outcome() {
    let d = single_binary(0.6, 0.4);
    let data = sim::simulate(&d, 500, 5).unwrap();
    let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
    let se = f.standard_errors().unwrap();
    let i = f.names.iter().position(|n| n == "b.mean_C").unwrap();
    assert!((f.estimates[i] - d.outcome(0).mean_control).abs() <= 3.0 * se[i]);

    let rate = |arm| {
        let v: Vec<f64> = (0..data.len()).filter(|&r| data.arm(r) == arm).map(|r| data.row(r)[0]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (pt, pc) = (rate(Arm::Treatment), rate(Arm::Control));
    let rule = d.responder_rule().unwrap();
    assert!((fit::delta_star(&f, rule).unwrap() - (pt - pc)).abs() < 1e-6);

    let want = pt * (1.0 - pt) / 500.0 + pc * (1.0 - pc) / 500.0;
    let got = fit::delta_variance(&f, rule).unwrap();
    assert!((got - want).abs() / want < 1e-4, "{got} vs {want}");
}

#[test]
fn identical_arms_give_zero_difference() {
    let d = mixed_design();
    let data = mirrored(&sim::simulate(&d, 150, 6).unwrap());
    let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
    let rule = d.responder_rule().unwrap();
    let c = fit::composite_estimate(&f, rule).unwrap();
    assert!(c.delta_star.abs() < 1e-5, "{}", c.delta_star);
    for alpha in [0.01, 0.025, 0.05, 0.2, 0.4] {
        assert!(!fit::wald_test(&f, rule, alpha).unwrap());
    }
}

#[test]
fn risk_difference_recovered() {
    let d = table2();
    let truth = power::design_delta_star(&d, &MvnOptions::smooth()).unwrap();
    assert!((truth - 0.20).abs() < 0.01, "{truth}");
    let data = sim::simulate(&d, 200, 8).unwrap();
    let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
    let c = fit::composite_estimate(&f, d.responder_rule().unwrap()).unwrap();
    assert!((c.delta_star - truth).abs() <= 3.0 * c.standard_error, "{} ± {}", c.delta_star, c.standard_error);
}

#[test]
fn variance_scales_inversely_with_n() {
    let d = pair_design(0.3);
    let rule = d.responder_rule().unwrap().clone();
    let median_var = |n: usize| {
        let mut v: Vec<f64> = (0..15)
            .map(|r| {
                let data = sim::simulate(&d, n, 100 + r).unwrap();
                let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
                fit::delta_variance(&f, &rule).unwrap()
            })
            .collect();
        sim::median(&mut v)
    };
    let ratio = median_var(300) / median_var(600);
    assert!((ratio - 2.0).abs() / 2.0 < 0.10, "{ratio}");
}

#[test]
fn null_wald_size() {
    let d = pair_design(0.0);
    let r = sim::empirical_power(&d, 100, 0.05, TestKind::Composite, &StudyOptions::new(1000, 71)).unwrap();
    assert!((r.estimate - 0.05).abs() <= 3.0 * r.mc_standard_error, "{}", r.estimate);
}

#[test]
fn bootstrap_agrees_with_information() {
    let d = mixed_design();
    let data = sim::simulate(&d, 800, 12).unwrap();
    let opts = FitOptions::default();
    let f = fit::fit(&data, &d, &opts).unwrap();
    let info = f.standard_errors().unwrap();
    let boot = fit::bootstrap_covariance(&data, &f, &opts).unwrap();
    for (i, name) in f.names.iter().enumerate() {
        let b = boot[(i, i)].sqrt();
        assert!((b - info[i]).abs() / info[i] < 0.15, "{name}: bootstrap {b} vs information {}", info[i]);
    }
}

#[test]
fn gradient_matches_richer_stencil() {
    for (d, n) in [(muse(), 200), (mixed_design(), 200), (table2(), 100)] {
        let data = sim::simulate(&d, n, 14).unwrap();
        let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
        let rule = d.responder_rule().unwrap();
        let a = fit::delta_gradient(&f, rule, Stencil::Central).unwrap();
        let b = fit::delta_gradient(&f, rule, Stencil::FivePoint).unwrap();
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            assert!((x - y).abs() <= 1e-4 * y.abs().max(1e-3 * scale), "{}: {x} vs {y}", f.names[i]);
        }
    }
}

#[test]
fn internal_parameterization_invariant() {
    let d = table2();
    let data = sim::simulate(&d, 100, 15).unwrap();
    let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
    let rule = d.responder_rule().unwrap();
    let a = fit::delta_star(&f, rule).unwrap();
    let b = fit::delta_star_internal(&f, rule).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn errors_shrink_with_n() {
    let d = pair_design(0.3);
    let truth: Vec<f64> = true_parameters(&d).into_iter().map(|p| p.1).collect();
    let median_error = |n: usize| {
        let mut e: Vec<f64> = (0..20)
            .map(|r| {
                let f = fit::fit(&sim::simulate(&d, n, 200 + r).unwrap(), &d, &FitOptions::default()).unwrap();
                f.estimates.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        sim::median(&mut e)
    };
    let (small, large) = (median_error(500), median_error(5000));
    assert!(large < small, "{large} vs {small}");
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let d = mixed_design();
    let data = sim::simulate(&d, 200, 16).unwrap();
    let opts = FitOptions { max_iterations: 1, tolerance: 1e-14, ..FitOptions::default() };
    let f = fit::fit(&data, &d, &opts).unwrap();
    assert!(!f.converged);
    assert!(fit::delta_star(&f, d.responder_rule().unwrap()).is_err());
}

#[test]
fn composite_variance_matches_probit_oracle() {
    let d = single_binary(0.55, 0.35);
    let data = sim::simulate(&d, 400, 17).unwrap();
    let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
    let mt = f.estimate("b.mean_T").unwrap();
    let mc = f.estimate("b.mean_C").unwrap();
    let se = f.standard_errors().unwrap();
    let density = |m: f64| (-0.5 * m * m).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // var(μ̂) from the information of a probit proportion
    let v = |m: f64| cdf_oracle(m) * (1.0 - cdf_oracle(m)) / (400.0 * density(m).powi(2));
    assert!((se[f.names.iter().position(|n| n == "b.mean_T").unwrap()].powi(2) - v(mt)).abs() / v(mt) < 1e-3);
    assert!((se[f.names.iter().position(|n| n == "b.mean_C").unwrap()].powi(2) - v(mc)).abs() / v(mc) < 1e-3);
}
