use std::path::PathBuf;
use std::process::{Command, Output};

use mixendpoint_cli::appendix::{self, Cell, Drivers};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixendpoint")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn with_scenario(cmd: &str, name: &str, extra: &[&str]) -> Output {
    let path = scenario(name);
    let mut args = vec![cmd, "--scenario", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

/// Value of `column` in the CSV row whose first field is `key`.
fn lookup(csv_text: &str, key: &str, column: &str) -> f64 {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == column).unwrap();
    r.records().map(|rec| rec.unwrap()).find(|rec| &rec[0] == key).map(|rec| rec[idx].parse().unwrap()).unwrap()
}

#[test]
fn validate_lists_canonical_outcomes() {
    let o = with_scenario("validate", "muse_coprimary.json", &[]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(names, ["SLEDAI", "PGA", "BILAG", "Taper"]);
}

#[test]
fn power_at_published_sizes() {
    let o = with_scenario("power", "muse_coprimary.json", &[]);
    assert!(o.status.success());
    assert!((lookup(&stdout(&o), "coprimary", "power") - 0.800).abs() <= 0.002);
    let o = with_scenario("power", "muse_multiprimary.json", &[]);
    assert!(lookup(&stdout(&o), "multiprimary", "power") >= 0.80);
}

#[test]
fn sample_sizes() {
    let text = stdout(&with_scenario("samplesize", "muse_samplesize.json", &[]));
    for (k, n) in [("individual:SLEDAI", 365.0), ("individual:PGA", 39.0), ("individual:BILAG", 273.0), ("individual:Taper", 99.0)] {
        assert_eq!(lookup(&text, k, "n"), n, "{k}");
    }
    assert!((lookup(&text, "coprimary", "n") - 403.0).abs() <= 1.0);
    assert!((lookup(&text, "multiprimary", "n") - 29.0).abs() <= 1.0);
    assert_eq!(lookup(&stdout(&with_scenario("samplesize", "composite_samplesize.json", &[])), "composite", "n"), 20.0);
    assert_eq!(lookup(&stdout(&with_scenario("samplesize", "binary_comparator.json", &[])), "binary_standard", "n"), 100.0);
}

#[test]
fn json_output_parses() {
    let o = with_scenario("power", "muse_coprimary.json", &["--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["endpoint"], "coprimary");
    assert_eq!(v[0]["n"], 403);
}

#[test]
fn invalid_input_exits_2() {
    let o = with_scenario("power", "empty_grid.json", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_grid is empty"));

    assert_eq!(run(&["reproduce", "table3"]).status.code(), Some(2));
    assert_eq!(run(&["power", "--scenario", "/nonexistent/scenario.json"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{
  "design": {
    "outcomes": [
      { "name": "a", "kind": "continuous", "sd": 1.0, "mean_treatment": 0.5, "mean_control": 0.0 },
      { "name": "b", "kind": "continuous", "sd": 1.0, "mean_treatment": 0.5, "mean_control": 0.0 }
    ],
    "correlations": [1.2]
  },
  "analysis": { "n": 50 }
}"#,
    )
    .unwrap();
    let o = run(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("correlation out of range"));
}

#[test]
fn simulate_is_byte_identical_and_written_to_out() {
    let a = with_scenario("simulate", "muse_simulate.json", &[]);
    let b = with_scenario("simulate", "muse_simulate.json", &[]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = with_scenario("simulate", "muse_simulate.json", &["--seed", "1"]);
    assert_ne!(a.stdout, c.stdout);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trial.csv");
    let d = with_scenario("simulate", "muse_simulate.json", &["--out", out.to_str().unwrap()]);
    assert_eq!(std::fs::read(&out).unwrap(), d.stdout);
}

#[test]
fn shipped_dataset_matches_its_seed() {
    let o = with_scenario("simulate", "muse_simulate.json", &[]);
    let shipped = std::fs::read(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample_muse.csv")).unwrap();
    assert_eq!(o.stdout, shipped);
}

#[test]
fn fit_sample_dataset_converges() {
    let o = with_scenario("fit", "muse_fit.json", &["--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["converged"], true);
    let delta = v["composite"]["delta_star"].as_f64().unwrap();
    let se = v["composite"]["standard_error"].as_f64().unwrap();
    assert!(delta > 0.0 && se > 0.0 && se < 0.1);
}

#[test]
fn reproduce_closed_form_targets() {
    for target in ["muse-table1", "muse-table2"] {
        let o = run(&["reproduce", target]);
        assert!(o.status.success(), "{target}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).lines().skip(1).all(|l| l.ends_with(",true")), "{target}");
    }
}

#[test]
fn reproduce_figure_curves() {
    let o = run(&["reproduce", "figure1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 496);
    assert!(text.starts_with("n,SLEDAI,PGA,BILAG,Taper,coprimary,multiprimary,composite"));
}

#[test]
fn empirical_command_runs() {
    let o = with_scenario("empirical", "composite_empirical.json", &["--reps", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = lookup(&stdout(&o), "composite", "power");
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn appendix_cell_at_reduced_scale() {
    let cell = Cell { drivers: Drivers::All, rho: 0.5, delta: 0.1, pilot_n: 100, reference: 80.4 };
    let r = appendix::run_cell(&cell, 100, 200, 5).unwrap();
    let se = 100.0 * r.report.mc_standard_error;
    assert!((100.0 * r.report.estimate - cell.reference).abs() <= 3.0 * se, "{} ± {se}", 100.0 * r.report.estimate);
    assert_eq!(r.report.replications + r.report.failures, 200);
}
