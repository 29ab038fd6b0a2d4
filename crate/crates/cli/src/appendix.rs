//! Three-outcome composite designs (one continuous, one five-level ordinal,
//! one binary) used for the empirical-power grid.

use mixendpoint::endpoint::{
    thresholds_from_probs, Direction, LatentDesign, OutcomeSpec, ResponderCriterion, ResponderRule,
};
use mixendpoint::error::{Error, Result};
use mixendpoint::mvn::MvnOptions;
use mixendpoint::power::design_delta_star;
use mixendpoint::sample_size::n_composite;
use mixendpoint::sim::{calibrate_sigma, empirical_power, EmpiricalPowerReport, StudyOptions, TestKind};
use serde::Serialize;

/// Category probabilities of the ordinal component under control.
const ORDINAL_PROBS: [f64; 5] = [0.2, 0.3, 0.2, 0.2, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Drivers {
    /// Continuous, ordinal and binary all enter the rule.
    All,
    /// Continuous and binary only.
    ContinuousBinary,
    /// Binary only.
    Binary,
}

impl Drivers {
    pub fn label(self) -> &'static str {
        match self {
            Drivers::All => "Y1Y2Y3",
            Drivers::ContinuousBinary => "Y1Y3",
            Drivers::Binary => "Y3",
        }
    }

    fn uses(self, outcome: usize) -> bool {
        match self {
            Drivers::All => true,
            Drivers::ContinuousBinary => outcome != 1,
            Drivers::Binary => outcome == 2,
        }
    }
}

/// Design with a common latent shift `d` on every component and every
/// component dichotomized at its control mean.
pub fn design(drivers: Drivers, rho: f64, d: f64) -> Result<LatentDesign> {
    let thresholds = thresholds_from_probs(&ORDINAL_PROBS)?;
    let middle = thresholds.cuts[1];
    let outcomes = vec![
        OutcomeSpec::continuous("Y1", 1.0, d, 0.0),
        OutcomeSpec::ordinal("Y2", thresholds, d + middle, middle),
        OutcomeSpec::binary("Y3", d, 0.0),
    ];
    let cut = [0.0, middle, 0.0];
    let rule = ResponderRule::new(
        (0..3)
            .map(|i| drivers.uses(i).then_some(ResponderCriterion { threshold: cut[i], direction: Direction::Above }))
            .collect(),
    );
    LatentDesign::from_upper(outcomes, &[rho; 3], Some(rule), 1.0)
}

/// Design whose risk difference equals `delta`, solved for the shift.
pub fn design_for_delta(drivers: Drivers, rho: f64, delta: f64) -> Result<(LatentDesign, f64)> {
    let opts = MvnOptions::smooth();
    let gap = |d: f64| -> Result<f64> { Ok(design_delta_star(&design(drivers, rho, d)?, &opts)? - delta) };
    let (mut lo, mut hi) = (0.0, 4.0);
    if gap(hi)? < 0.0 {
        return Err(Error::Infeasible(format!("risk difference {delta} is out of reach")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d = 0.5 * (lo + hi);
    Ok((design(drivers, rho, d)?, d))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cell {
    pub drivers: Drivers,
    /// Common correlation between the three outcomes.
    pub rho: f64,
    pub delta: f64,
    /// Per-arm size of the pilot trials that set σ².
    pub pilot_n: usize,
    /// Published empirical power, percent.
    pub reference: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        let c = match self.rho {
            0.0 => "000",
            0.3 => "LLL",
            0.5 => "MMM",
            0.8 => "HHH",
            _ => "custom",
        };
        format!("{} delta={} {} n={}", self.drivers.label(), self.delta, c, self.pilot_n)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    pub shift: f64,
    pub median_sigma_sq: f64,
    pub n_latent: u64,
    pub report: EmpiricalPowerReport,
}

impl CellResult {
    /// Distance of the empirical power from 80% in Monte Carlo SEs.
    pub fn deviation(&self) -> f64 {
        (self.report.estimate - 0.8) / self.report.mc_standard_error
    }
}

/// Pilot calibration of σ², sample size for 80% power at one-sided 5%,
/// then the empirical power of the Wald test at that size.
pub fn run_cell(cell: &Cell, pilot_reps: usize, reps: usize, seed: u64) -> Result<CellResult> {
    let (design, shift) = design_for_delta(cell.drivers, cell.rho, cell.delta)?;
    let calib = calibrate_sigma(&design, cell.pilot_n, &StudyOptions::new(pilot_reps, seed))?;
    let n = n_composite(cell.delta, calib.median_sigma_sq, 0.05, 0.8)?.n;
    let report = empirical_power(
        &design,
        n as usize,
        0.05,
        TestKind::Composite,
        &StudyOptions::new(reps, seed.wrapping_add(1)),
    )?;
    Ok(CellResult { cell: *cell, shift, median_sigma_sq: calib.median_sigma_sq, n_latent: n, report })
}
