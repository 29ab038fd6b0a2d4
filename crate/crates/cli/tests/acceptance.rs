//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line to stderr, uncaptured.

use std::io::Write;
use std::time::Instant;

use mixendpoint::endpoint::*;
use mixendpoint::fit::{self, FitOptions, Stencil};
use mixendpoint::mvn::{mvn_rectangle, CorrelationMatrix, MvnOptions};
use mixendpoint::power::{self, PowerQuery};
use mixendpoint::sample_size::*;
use mixendpoint::sim::{self, StudyOptions, TestKind};
use mixendpoint_cli::reproduce::{self, ReproduceOptions, Target};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

const SEED: u64 = 20260;

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!("criterion {criterion}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn opts() -> MvnOptions {
    MvnOptions::default()
}

#[test]
fn criterion_1_individual_sizes() {
    let got: Vec<u64> = [(0.88, 18.0), (0.38, 0.35), (0.24, 1.0), (0.40, 1.0)]
        .iter()
        .map(|&(d, s)| n_individual(d, s, 0.025, 0.8).unwrap().n)
        .collect();
    report(1, got == [365, 39, 273, 99], &format!("sizes {got:?}, reference [365, 39, 273, 99]"));
}

#[test]
fn criterion_2_latent_effects() {
    let a = latent_effect_from_proportions(0.97, 0.95).unwrap();
    let b = latent_effect_from_proportions(0.54, 0.38).unwrap();
    let pass = (a - 0.24).abs() <= 0.005 && (b - 0.40).abs() <= 0.01;
    report(2, pass, &format!("(0.97,0.95) -> {a:.4}, (0.54,0.38) -> {b:.4}"));
}

#[test]
fn criterion_3_coprimary_sizes() {
    let mut parts = Vec::new();
    let mut pass = true;
    for (var, want) in [(18.0, 403i64), (19.0, 419), (20.0, 435)] {
        let t = Instant::now();
        let n = n_coprimary(&reproduce::muse_row_design(var, 0.35), 0.025, 0.8, &opts()).unwrap().n as i64;
        let secs = t.elapsed().as_secs_f64();
        pass &= (n - want).abs() <= 1 && secs < 10.0;
        parts.push(format!("s1={var}: {n} (ref {want}, {secs:.1}s)"));
    }
    report(3, pass, &parts.join("; "));
}

#[test]
fn criterion_4_multiprimary_sizes() {
    let mut parts = Vec::new();
    let mut pass = true;
    for (var, want) in [(0.35, 29i64), (0.45, 34), (0.55, 39), (0.65, 42)] {
        let n = n_multiprimary(&reproduce::muse_row_design(18.0, var), 0.025, 0.8, &opts()).unwrap().n as i64;
        pass &= (n - want).abs() <= 1;
        parts.push(format!("s2={var}: {n} (ref {want})"));
    }
    report(4, pass, &parts.join("; "));
}

#[test]
fn criterion_5_composite_sizes() {
    let lat: Vec<u64> =
        reproduce::TABLE2_SIGMAS.iter().map(|&s| n_composite(0.20, s, 0.05, 0.88).unwrap().n).collect();
    let bin = n_binary_standard(0.60, 0.40, 0.05, 0.88).unwrap().n;
    let pass = lat == [20, 24, 28, 32, 36, 40] && bin == 100;
    report(5, pass, &format!("latent {lat:?}, binary {bin}"));
}

#[test]
fn criterion_6_composite_empirical_power() {
    let design = reproduce::composite_design();
    let t = Instant::now();
    let full = sim::empirical_power(&design, 20, 0.05, TestKind::Composite, &StudyOptions::new(1000, SEED)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let small = sim::empirical_power(&design, 20, 0.05, TestKind::Composite, &StudyOptions::new(200, SEED)).unwrap();
    let (p, q) = (100.0 * full.estimate, 100.0 * small.estimate);
    let pass = (84.9..=91.1).contains(&p) && (81.0..=95.0).contains(&q) && secs <= 1200.0;
    report(
        6,
        pass,
        &format!(
            "R=1000: {p:.1}% (band 84.9-91.1, {} fit failures, {secs:.0}s); R=200: {q:.1}% (band 81-95)",
            full.failures
        ),
    );
}

#[test]
fn criterion_7_appendix_cells() {
    let opts = ReproduceOptions { replications: Some(1000), seed: SEED, ..ReproduceOptions::default() };
    let r = reproduce::run(Target::AppendixEmpPower, &opts).unwrap();
    let col = |name: &str| r.table.columns.iter().position(|c| c == name).unwrap();
    let (cell, computed, pass_col) = (col("cell"), col("computed"), col("pass"));
    let mut passed = Vec::new();
    let mut lines = Vec::new();
    for row in &r.table.rows {
        let label = row[cell].to_string();
        let ok = row[pass_col].to_string() == "true";
        lines.push(format!("{label} {}{}", row[computed], if ok { "" } else { " (outside 3 SE)" }));
        if ok {
            passed.push(label);
        }
    }
    let spans = |tags: &[&str]| tags.iter().all(|t| passed.iter().any(|l| l.split_whitespace().any(|w| w == *t)));
    let pass = passed.len() >= 6 && spans(&["Y1Y2Y3", "Y1Y3", "Y3"]) && spans(&["000", "MMM", "HHH"]);
    report(7, pass, &format!("{} of {} cells within 3 MC SE: {}", passed.len(), r.table.rows.len(), lines.join("; ")));
}

// Criterion 8 helpers.

fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn simpson(a: f64, b: f64, m: usize, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Trivariate rectangle by Simpson over two whitened coordinates and the
/// closed form in the third.
fn dense_trivariate(lo: &[f64], hi: &[f64], r: [f64; 3]) -> f64 {
    let (l10, l20) = (r[0], r[1]);
    let l11 = (1.0 - l10 * l10).sqrt();
    let l21 = (r[2] - l20 * l10) / l11;
    let l22 = (1.0 - l20 * l20 - l21 * l21).sqrt();
    let clip = |x: f64| x.clamp(-9.0, 9.0);
    let dens = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    simpson(clip(lo[0]), clip(hi[0]), 600, |w1| {
        dens(w1)
            * simpson(clip((lo[1] - l10 * w1) / l11), clip((hi[1] - l10 * w1) / l11), 600, |w2| {
                let s = l20 * w1 + l21 * w2;
                dens(w2) * (cdf((hi[2] - s) / l22) - cdf((lo[2] - s) / l22))
            })
    })
}

fn random_design() -> impl Strategy<Value = LatentDesign> {
    (2usize..=4)
        .prop_flat_map(|k| {
            (
                proptest::collection::vec(0u8..3, k),
                proptest::collection::vec(0.1f64..0.6, k),
                proptest::collection::vec(-0.3f64..0.7, k * (k - 1) / 2),
            )
        })
        .prop_filter_map("not positive definite", |(kinds, effects, upper)| {
            let outcomes = kinds
                .iter()
                .zip(&effects)
                .enumerate()
                .map(|(i, (&kind, &e))| match kind {
                    0 => OutcomeSpec::continuous(&format!("y{i}"), 2.0, 2.0 * e, 0.0),
                    1 => OutcomeSpec::ordinal(&format!("y{i}"), thresholds_from_probs(&[0.3, 0.4, 0.3]).unwrap(), e, 0.0),
                    _ => OutcomeSpec::binary(&format!("y{i}"), e - 0.3, -0.3),
                })
                .collect();
            LatentDesign::from_upper(outcomes, &upper, None, 1.0).ok().filter(|d| d.validate().is_empty())
        })
}

fn ordering_on_random_designs() -> (bool, String) {
    let mut runner = TestRunner::deterministic();
    let strategy = random_design();
    let mut bad = 0;
    for _ in 0..50 {
        let d = strategy.new_tree(&mut runner).unwrap().current();
        let ind: Vec<u64> = (0..d.k()).map(|k| n_individual_in_design(&d, k, 0.025, 0.8).unwrap().n).collect();
        let co = n_coprimary(&d, 0.025, 0.8, &opts()).unwrap().n;
        let mp = n_multiprimary(&d, 0.025, 0.8, &opts()).unwrap().n;
        if !(mp <= *ind.iter().min().unwrap() && *ind.iter().max().unwrap() <= co) {
            bad += 1;
        }
    }
    (bad == 0, format!("ordering holds on {} of 50 random designs", 50 - bad))
}

fn identity_factorizations() -> (bool, String) {
    let effects = [0.3, 0.15, 0.45, 0.2];
    let d = LatentDesign::from_upper(
        effects.iter().enumerate().map(|(i, &e)| OutcomeSpec::continuous(&format!("y{i}"), 1.0, e, 0.0)).collect(),
        &[0.0; 6],
        None,
        1.0,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for n in [20u64, 80, 200] {
        let q = PowerQuery::new(&d, n, 0.025).unwrap();
        let p: Vec<f64> = (0..4).map(|k| power::power_individual(&d, k, n, 0.025).unwrap()).collect();
        let co = power::power_coprimary(&q, &opts()).unwrap();
        let mp = power::power_multiprimary(&q, &opts()).unwrap();
        let prod: f64 = p.iter().product();
        let union = 1.0 - p.iter().map(|x| 1.0 - x).product::<f64>();
        pass &= (co.power - prod).abs() <= 3.0 * co.error + 1e-12 && (mp.power - union).abs() <= 3.0 * mp.error + 1e-12;
        worst = worst.max((co.power - prod).abs()).max((mp.power - union).abs());
    }
    (pass, format!("identity product/union max deviation {worst:.1e}"))
}

fn kernel_against_oracle() -> (bool, String) {
    let cases: [([f64; 3], [f64; 3], [f64; 3]); 4] = [
        ([f64::NEG_INFINITY; 3], [0.5; 3], [0.3, 0.3, 0.3]),
        ([-1.0, f64::NEG_INFINITY, -0.5], [1.0, 0.7, 2.0], [0.6, -0.2, 0.1]),
        ([f64::NEG_INFINITY; 3], [0.0, 1.0, -0.3], [-0.4, 0.5, 0.3]),
        ([0.2, -2.0, f64::NEG_INFINITY], [f64::INFINITY, 0.4, 1.5], [0.8, 0.5, 0.45]),
    ];
    let mut worst: f64 = 0.0;
    for (lo, hi, r) in cases {
        let corr = CorrelationMatrix::from_upper(3, &r).unwrap();
        let got = mvn_rectangle(&lo, &hi, &[0.0; 3], &corr, &opts()).unwrap().value;
        worst = worst.max((got - dense_trivariate(&lo, &hi, r)).abs());
    }
    (worst <= 1e-5, format!("kernel vs dense quadrature max error {worst:.1e}"))
}

fn gradient_and_recovery() -> Vec<(bool, String)> {
    let d = reproduce::muse_design();
    let data = sim::simulate(&d, 5000, 99).unwrap();
    let f = fit::fit(&data, &d, &FitOptions::default()).unwrap();
    let se = f.standard_errors().unwrap();
    let fitted = f.fitted_design().unwrap();
    let mut truth = Vec::new();
    for o in d.outcomes() {
        let shift = if matches!(o.kind, OutcomeKind::Ordinal(_)) { o.mean_control } else { 0.0 };
        truth.push((format!("{}.mean_T", o.name), o.mean_treatment - shift));
        match &o.kind {
            OutcomeKind::Continuous => {
                truth.push((format!("{}.mean_C", o.name), o.mean_control));
                truth.push((format!("{}.sd", o.name), o.sd));
            }
            OutcomeKind::Ordinal(t) => {
                truth.extend(t.cuts.iter().enumerate().map(|(j, c)| (format!("{}.cut{}", o.name, j + 1), c - shift)))
            }
            OutcomeKind::Binary => truth.push((format!("{}.mean_C", o.name), o.mean_control)),
        }
    }
    for i in 0..d.k() {
        for j in i + 1..d.k() {
            truth.push((format!("rho({},{})", d.outcome(i).name, d.outcome(j).name), d.correlations()[(i, j)]));
        }
    }
    let mut worst_z: f64 = 0.0;
    let mut worst_rho: f64 = 0.0;
    for (name, t) in &truth {
        let i = f.names.iter().position(|n| n == name).expect("parameter present");
        worst_z = worst_z.max((f.estimates[i] - t).abs() / se[i]);
        if name.starts_with("rho") {
            worst_rho = worst_rho.max((f.estimates[i] - t).abs());
        }
    }
    assert_eq!(fitted.k(), d.k());

    let rule = reproduce::composite_design().responder_rule().unwrap().clone();
    let cdesign = reproduce::composite_design();
    let cf = fit::fit(&sim::simulate(&cdesign, 100, 14).unwrap(), &cdesign, &FitOptions::default()).unwrap();
    let a = fit::delta_gradient(&cf, &rule, Stencil::Central).unwrap();
    let b = fit::delta_gradient(&cf, &rule, Stencil::FivePoint).unwrap();
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let worst_rel = a.iter().zip(&b).map(|(x, y)| (x - y).abs() / y.abs().max(1e-3 * scale)).fold(0.0, f64::max);
    vec![
        (worst_rel <= 1e-4, format!("delta-method gradient vs five-point stencil max relative gap {worst_rel:.1e}")),
        (
            worst_z <= 3.0 && worst_rho <= 0.05,
            format!("recovery at n=5000: max |error|/SE {worst_z:.2}, max rho error {worst_rho:.3}"),
        ),
    ]
}

fn null_rejection_rates() -> (bool, String) {
    let d = LatentDesign::from_upper(
        vec![
            OutcomeSpec::continuous("c", 1.0, 0.0, 0.0),
            OutcomeSpec::binary("b", -0.25, -0.25),
        ],
        &[0.5],
        Some(ResponderRule::new(vec![
            Some(ResponderCriterion { threshold: 0.0, direction: Direction::Above }),
            Some(ResponderCriterion { threshold: 0.0, direction: Direction::Above }),
        ])),
        1.0,
    )
    .unwrap();
    let alpha = 0.05;
    let mut pass = true;
    let mut parts = Vec::new();
    for test in [TestKind::Individual(0), TestKind::Individual(1), TestKind::BinaryStandard, TestKind::Composite] {
        let r = sim::empirical_power(&d, 100, alpha, test, &StudyOptions::new(1000, SEED)).unwrap();
        pass &= (r.estimate - alpha).abs() <= 3.0 * r.mc_standard_error;
        parts.push(format!("{test:?} {:.3}", r.estimate));
    }
    (pass, format!("null sizes at alpha 0.05: {}", parts.join(", ")))
}

#[test]
fn criterion_8_property_suite() {
    let mut checks = vec![ordering_on_random_designs(), identity_factorizations(), kernel_against_oracle()];
    checks.extend(gradient_and_recovery());
    checks.push(null_rejection_rates());
    let pass = checks.iter().all(|c| c.0);
    let detail: Vec<String> =
        checks.iter().map(|(ok, d)| format!("{}{d}", if *ok { "" } else { "FAILED " })).collect();
    report(8, pass, &detail.join("; "));
}

#[test]
fn criterion_9_figure_ordering() {
    let table = reproduce::figure1_curves(&ReproduceOptions::default()).unwrap();
    let violations = reproduce::figure1_violations(&table);
    let pass = violations.is_empty() && table.rows.len() == 496;
    let first = violations.first().map(|v| format!(", first: {v}")).unwrap_or_default();
    report(9, pass, &format!("{} grid points, {} ordering violations{first}", table.rows.len(), violations.len()));
}
