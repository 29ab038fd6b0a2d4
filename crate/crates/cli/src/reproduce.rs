//! Regeneration of the MUSE tables, the power curves and the
//! three-outcome empirical-power grid, each checked against the
//! reference table.

use std::str::FromStr;

use mixendpoint::endpoint::{DesignConfig, LatentDesign};
use mixendpoint::error::{Error, Result};
use mixendpoint::mvn::MvnOptions;
use mixendpoint::power::{self, CompositeSummary, PowerQuery};
use mixendpoint::sample_size::{n_binary_standard, n_composite, n_coprimary, n_individual_in_design, n_multiprimary};
use mixendpoint::sim::{empirical_power, StudyOptions, TestKind};

use crate::appendix::{self, Cell as GridCell, Drivers};
use crate::output::{Cell, Table};
use crate::reference::{self, Reference};

pub const MUSE_DESIGN: &str = include_str!("../fixtures/muse.json");
pub const COMPOSITE_DESIGN: &str = include_str!("../fixtures/composite_table2.json");

/// Per-arm variance scale of the composite curve in `figure1` unless
/// overridden.
pub const FIGURE_SIGMA_SQ: f64 = 0.048;
/// Pilot trials used to set σ² in each grid cell.
pub const PILOT_REPLICATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    MuseTable1,
    MuseTable2,
    Figure1,
    AppendixEmpPower,
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "muse-table1" => Target::MuseTable1,
            "muse-table2" => Target::MuseTable2,
            "figure1" => Target::Figure1,
            "appendix-emppower" => Target::AppendixEmpPower,
            other => {
                return Err(format!(
                    "unknown target '{other}' (muse-table1, muse-table2, figure1, appendix-emppower)"
                ))
            }
        })
    }
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::MuseTable1 => "muse-table1",
            Target::MuseTable2 => "muse-table2",
            Target::Figure1 => "figure1",
            Target::AppendixEmpPower => "appendix-emppower",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub table: Table,
    /// Cells outside tolerance, one line each.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub mvn: MvnOptions,
    /// Replications for simulation cells; `None` skips them where optional.
    pub replications: Option<usize>,
    pub seed: u64,
    pub figure_sigma_sq: f64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions { mvn: MvnOptions::default(), replications: None, seed: 20260, figure_sigma_sq: FIGURE_SIGMA_SQ }
    }
}

pub fn muse_design() -> LatentDesign {
    DesignConfig::from_json(MUSE_DESIGN).and_then(|c| c.build()).expect("shipped MUSE design is valid")
}

pub fn composite_design() -> LatentDesign {
    DesignConfig::from_json(COMPOSITE_DESIGN).and_then(|c| c.build()).expect("shipped composite design is valid")
}

pub fn run(target: Target, opts: &ReproduceOptions) -> Result<Reproduction> {
    match target {
        Target::MuseTable1 => muse_table1(opts),
        Target::MuseTable2 => muse_table2(opts),
        Target::Figure1 => figure1(opts),
        Target::AppendixEmpPower => appendix_emppower(opts),
    }
}

/// Comparison table in long form: one row per checked cell.
struct Checker {
    target: &'static str,
    table: Table,
    failures: Vec<String>,
}

impl Checker {
    fn new(target: &'static str) -> Self {
        Checker {
            target,
            table: Table::new(&["cell", "computed", "reference", "tolerance", "mc_se", "pass"]),
            failures: Vec::new(),
        }
    }

    fn reference(&self, cell: &str) -> Result<&'static Reference> {
        reference::lookup(self.target, cell)
            .ok_or_else(|| Error::Config(format!("no reference value for {} / {cell}", self.target)))
    }

    fn check(&mut self, cell: &str, computed: f64, mc_se: Option<f64>) -> Result<bool> {
        let r = self.reference(cell)?;
        let ok = r.tolerance.accepts(computed, r.value, mc_se);
        self.table.push(vec![
            cell.into(),
            computed.into(),
            r.value.into(),
            r.tolerance.describe().into(),
            mc_se.map(Cell::from).unwrap_or_else(|| "".into()),
            ok.into(),
        ]);
        if !ok {
            self.failures.push(format!("{cell}: computed {computed}, reference {} ({})", r.value, r.tolerance.describe()));
        }
        Ok(ok)
    }

    fn finish(self) -> Reproduction {
        Reproduction { table: self.table, failures: self.failures }
    }
}

/// SLEDAI and PGA variances of the six MUSE rows.
pub const MUSE_ROWS: [(f64, f64); 6] = [(18.0, 0.35), (19.0, 0.35), (20.0, 0.35), (18.0, 0.45), (18.0, 0.55), (18.0, 0.65)];

pub fn muse_row_design(var_sledai: f64, var_pga: f64) -> LatentDesign {
    let d = muse_design();
    let sledai = d.index_of("SLEDAI").expect("SLEDAI");
    let pga = d.index_of("PGA").expect("PGA");
    d.with_sd(sledai, var_sledai.sqrt()).with_sd(pga, var_pga.sqrt())
}

fn muse_table1(opts: &ReproduceOptions) -> Result<Reproduction> {
    let mut ck = Checker::new("muse-table1");
    for (v1, v2) in MUSE_ROWS {
        let design = muse_row_design(v1, v2);
        let row = format!("s1={v1} s2={v2}");
        ck.check(&format!("{row} n_co"), n_coprimary(&design, 0.025, 0.8, &opts.mvn)?.n as f64, None)?;
        ck.check(&format!("{row} n_mult"), n_multiprimary(&design, 0.025, 0.8, &opts.mvn)?.n as f64, None)?;
        for (k, name) in ["SLEDAI", "PGA", "BILAG", "Taper"].iter().enumerate() {
            let idx = design.index_of(name).expect("MUSE outcome");
            let n = n_individual_in_design(&design, idx, 0.025, 0.8)?.n;
            ck.check(&format!("{row} SS{}", k + 1), n as f64, None)?;
        }
    }
    Ok(ck.finish())
}

pub const TABLE2_SIGMAS: [f64; 6] = [0.05, 0.06, 0.07, 0.08, 0.09, 0.10];

fn muse_table2(opts: &ReproduceOptions) -> Result<Reproduction> {
    let mut ck = Checker::new("muse-table2");
    for s in TABLE2_SIGMAS {
        let n = n_composite(0.20, s, 0.05, 0.88)?.n;
        ck.check(&format!("sigma={s:.2} n_lat"), n as f64, None)?;
    }
    ck.check("n_bin", n_binary_standard(0.60, 0.40, 0.05, 0.88)?.n as f64, None)?;
    if let Some(reps) = opts.replications {
        let design = composite_design();
        let r = empirical_power(&design, 20, 0.05, TestKind::Composite, &StudyOptions::new(reps, opts.seed))?;
        ck.check("sigma=0.05 empirical", 100.0 * r.estimate, Some(100.0 * r.mc_standard_error))?;
    }
    Ok(ck.finish())
}

/// Power curves on n = 5..=500 for the MUSE design: every individual
/// outcome, co-primary, multiple-primary and composite. The joint curves
/// use the deterministic quadrature, which is free of lattice noise and
/// far cheaper than the adaptive rule at K = 4.
pub fn figure1_curves(opts: &ReproduceOptions) -> Result<Table> {
    let design = muse_design();
    let alpha = 0.025;
    let names: Vec<String> = design.outcomes().iter().map(|o| o.name.clone()).collect();
    let mut cols: Vec<&str> = vec!["n"];
    cols.extend(names.iter().map(String::as_str));
    cols.extend(["coprimary", "multiprimary", "composite"]);
    let mut table = Table::new(&cols);
    let smooth = MvnOptions::smooth();
    let summary = CompositeSummary::new(power::design_delta_star(&design, &smooth)?, opts.figure_sigma_sq)?;
    for n in 5..=500u64 {
        let mut row: Vec<Cell> = vec![n.into()];
        for k in 0..design.k() {
            row.push(power::power_individual(&design, k, n, alpha)?.into());
        }
        let q = PowerQuery::new(&design, n, alpha)?;
        row.push(power::power_coprimary(&q, &smooth)?.power.into());
        row.push(power::power_multiprimary(&q, &smooth)?.power.into());
        row.push(power::power_composite(&summary, n, alpha)?.into());
        table.push(row);
    }
    Ok(table)
}

/// Ordering violations in the curve table: multiple-primary must be the
/// highest curve and co-primary no higher than any individual outcome.
pub fn figure1_violations(table: &Table) -> Vec<String> {
    let col = |name: &str| table.columns.iter().position(|c| c == name).expect("curve column");
    let (co, mult, comp) = (col("coprimary"), col("multiprimary"), col("composite"));
    let individual: Vec<usize> = (1..co).collect();
    let num = |c: &Cell| match c {
        Cell::Num(v) => *v,
        Cell::Int(v) => *v as f64,
        _ => f64::NAN,
    };
    // integrator noise allowance
    let slack = 1e-4;
    let mut out = Vec::new();
    for row in &table.rows {
        let n = num(&row[0]);
        let m = num(&row[mult]);
        for &j in individual.iter().chain([&co, &comp]) {
            if num(&row[j]) > m + slack {
                out.push(format!("n={n}: {} above multiprimary", table.columns[j]));
            }
        }
        for &j in &individual {
            if num(&row[co]) > num(&row[j]) + slack {
                out.push(format!("n={n}: coprimary above {}", table.columns[j]));
            }
        }
    }
    out
}

fn figure1(opts: &ReproduceOptions) -> Result<Reproduction> {
    let table = figure1_curves(opts)?;
    let failures = figure1_violations(&table);
    Ok(Reproduction { table, failures })
}

pub fn appendix_cells() -> Vec<GridCell> {
    reference::for_target("appendix-emppower")
        .map(|r| {
            let mut parts = r.cell.split_whitespace();
            let drivers = match parts.next() {
                Some("Y1Y2Y3") => Drivers::All,
                Some("Y1Y3") => Drivers::ContinuousBinary,
                _ => Drivers::Binary,
            };
            let delta = parts.next().and_then(|d| d.strip_prefix("delta=")).and_then(|d| d.parse().ok()).expect("delta");
            let rho = match parts.next() {
                Some("000") => 0.0,
                Some("LLL") => 0.3,
                Some("MMM") => 0.5,
                _ => 0.8,
            };
            let pilot_n = parts.next().and_then(|d| d.strip_prefix("n=")).and_then(|d| d.parse().ok()).expect("n");
            GridCell { drivers, rho, delta, pilot_n, reference: r.value }
        })
        .collect()
}

fn appendix_emppower(opts: &ReproduceOptions) -> Result<Reproduction> {
    let reps = opts.replications.unwrap_or(1000);
    let mut ck = Checker::new("appendix-emppower");
    let mut detail =
        Table::new(&["cell", "shift", "median_sigma_sq", "n_latent", "replications", "failures", "power", "mc_se"]);
    for cell in appendix_cells() {
        let r = appendix::run_cell(&cell, PILOT_REPLICATIONS.min(reps), reps, opts.seed)?;
        ck.check(&cell.label(), 100.0 * r.report.estimate, Some(100.0 * r.report.mc_standard_error))?;
        detail.push(vec![
            cell.label().into(),
            r.shift.into(),
            r.median_sigma_sq.into(),
            r.n_latent.into(),
            r.report.replications.into(),
            r.report.failures.into(),
            (100.0 * r.report.estimate).into(),
            (100.0 * r.report.mc_standard_error).into(),
        ]);
    }
    let mut out = ck.finish();
    // design details follow the comparison columns
    out.table.columns.extend(detail.columns[1..].iter().cloned());
    for (row, extra) in out.table.rows.iter_mut().zip(detail.rows) {
        row.extend(extra.into_iter().skip(1));
    }
    Ok(out)
}
