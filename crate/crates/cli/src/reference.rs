//! Published values that `reproduce` compares against, with the tolerance
//! each comparison uses. Everything numeric that a reproduction target
//! checks lives in this one table.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Exact,
    /// Absolute difference.
    Within(f64),
    /// Multiples of the Monte Carlo standard error of the computed value.
    McSe(f64),
}

impl Tolerance {
    pub fn accepts(self, computed: f64, reference: f64, mc_se: Option<f64>) -> bool {
        match self {
            Tolerance::Exact => computed == reference,
            Tolerance::Within(t) => (computed - reference).abs() <= t + 1e-12,
            Tolerance::McSe(k) => mc_se.is_some_and(|se| (computed - reference).abs() <= k * se),
        }
    }

    pub fn describe(self) -> String {
        match self {
            Tolerance::Exact => "exact".into(),
            Tolerance::Within(t) => format!("±{t}"),
            Tolerance::McSe(k) => format!("±{k} MC SE"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub target: &'static str,
    pub cell: &'static str,
    pub value: f64,
    pub tolerance: Tolerance,
}

const fn r(target: &'static str, cell: &'static str, value: f64, tolerance: Tolerance) -> Reference {
    Reference { target, cell, value, tolerance }
}

use Tolerance::{Exact, McSe, Within};

pub const REFERENCES: &[Reference] = &[
    // MUSE co-primary / multiple-primary sizes, one-sided α = 0.025, 80%.
    // Rows vary the SLEDAI variance (18, 19, 20) then the PGA variance
    // (0.45, 0.55, 0.65) around the baseline 18 / 0.35.
    r("muse-table1", "s1=18 s2=0.35 n_co", 403.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.35 n_mult", 29.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.35 SS1", 365.0, Exact),
    r("muse-table1", "s1=18 s2=0.35 SS2", 39.0, Exact),
    r("muse-table1", "s1=18 s2=0.35 SS3", 273.0, Exact),
    r("muse-table1", "s1=18 s2=0.35 SS4", 99.0, Exact),
    r("muse-table1", "s1=19 s2=0.35 n_co", 419.0, Within(1.0)),
    r("muse-table1", "s1=19 s2=0.35 n_mult", 29.0, Within(1.0)),
    r("muse-table1", "s1=19 s2=0.35 SS1", 386.0, Exact),
    r("muse-table1", "s1=19 s2=0.35 SS2", 39.0, Exact),
    r("muse-table1", "s1=19 s2=0.35 SS3", 273.0, Exact),
    r("muse-table1", "s1=19 s2=0.35 SS4", 99.0, Exact),
    r("muse-table1", "s1=20 s2=0.35 n_co", 435.0, Within(1.0)),
    r("muse-table1", "s1=20 s2=0.35 n_mult", 29.0, Within(1.0)),
    r("muse-table1", "s1=20 s2=0.35 SS1", 406.0, Exact),
    r("muse-table1", "s1=20 s2=0.35 SS2", 39.0, Exact),
    r("muse-table1", "s1=20 s2=0.35 SS3", 273.0, Exact),
    r("muse-table1", "s1=20 s2=0.35 SS4", 99.0, Exact),
    r("muse-table1", "s1=18 s2=0.45 n_co", 403.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.45 n_mult", 34.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.45 SS1", 365.0, Exact),
    r("muse-table1", "s1=18 s2=0.45 SS2", 49.0, Exact),
    r("muse-table1", "s1=18 s2=0.45 SS3", 273.0, Exact),
    r("muse-table1", "s1=18 s2=0.45 SS4", 99.0, Exact),
    r("muse-table1", "s1=18 s2=0.55 n_co", 403.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.55 n_mult", 39.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.55 SS1", 365.0, Exact),
    r("muse-table1", "s1=18 s2=0.55 SS2", 60.0, Exact),
    r("muse-table1", "s1=18 s2=0.55 SS3", 273.0, Exact),
    r("muse-table1", "s1=18 s2=0.55 SS4", 99.0, Exact),
    r("muse-table1", "s1=18 s2=0.65 n_co", 403.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.65 n_mult", 42.0, Within(1.0)),
    r("muse-table1", "s1=18 s2=0.65 SS1", 365.0, Exact),
    r("muse-table1", "s1=18 s2=0.65 SS2", 71.0, Exact),
    r("muse-table1", "s1=18 s2=0.65 SS3", 273.0, Exact),
    r("muse-table1", "s1=18 s2=0.65 SS4", 99.0, Exact),
    // Composite sizes for a risk difference of 0.20 at 88% power, one-sided
    // z_0.95, reading the printed σ as the per-arm variance σ².
    r("muse-table2", "sigma=0.05 n_lat", 20.0, Exact),
    r("muse-table2", "sigma=0.06 n_lat", 24.0, Exact),
    r("muse-table2", "sigma=0.07 n_lat", 28.0, Exact),
    r("muse-table2", "sigma=0.08 n_lat", 32.0, Exact),
    r("muse-table2", "sigma=0.09 n_lat", 36.0, Exact),
    r("muse-table2", "sigma=0.10 n_lat", 40.0, Exact),
    // standard binary method, response 0.60 vs 0.40
    r("muse-table2", "n_bin", 100.0, Exact),
    // empirical power of the Wald test at n_lat = 20 over 1000 trials, percent
    r("muse-table2", "sigma=0.05 empirical", 88.05, McSe(3.0)),
    // Three-outcome composite, empirical power (percent) at the size set by
    // pilot trials of n per arm; one-sided α = 0.05, 80% target.
    r("appendix-emppower", "Y1Y2Y3 delta=0.1 000 n=100", 80.0, McSe(3.0)),
    r("appendix-emppower", "Y1Y2Y3 delta=0.1 MMM n=100", 80.4, McSe(3.0)),
    r("appendix-emppower", "Y1Y2Y3 delta=0.1 HHH n=100", 79.9, McSe(3.0)),
    r("appendix-emppower", "Y1Y3 delta=0.1 MMM n=100", 80.2, McSe(3.0)),
    r("appendix-emppower", "Y1Y3 delta=0.1 HHH n=100", 80.1, McSe(3.0)),
    r("appendix-emppower", "Y3 delta=0.15 000 n=100", 80.2, McSe(3.0)),
    r("appendix-emppower", "Y3 delta=0.15 HHH n=100", 80.0, McSe(3.0)),
];

pub fn lookup(target: &str, cell: &str) -> Option<&'static Reference> {
    REFERENCES.iter().find(|r| r.target == target && r.cell == cell)
}

pub fn for_target(target: &str) -> impl Iterator<Item = &'static Reference> + '_ {
    REFERENCES.iter().filter(move |r| r.target == target)
}
