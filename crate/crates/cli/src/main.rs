use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixendpoint_cli::commands::{self, Flags, Output};
use mixendpoint_cli::output::Format;
use mixendpoint_cli::reproduce::Target;

/// Power, sample size, simulation and model fitting for co-primary,
/// multiple-primary and composite endpoints built from continuous,
/// ordinal and binary outcomes.
///
/// Multiple-primary power uses the unadjusted one-sided level for every
/// outcome; no multiplicity correction is applied.
///
/// Exit codes: 0 success, 2 invalid input, 3 numerical failure or a
/// reproduced value outside tolerance.
#[derive(Parser)]
#[command(name = "mixendpoint", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and list its outcomes in canonical order.
    Validate(Common),
    /// Power at the scenario's n or n-grid.
    Power(Common),
    /// Smallest per-arm n reaching the scenario's target power.
    Samplesize(Common),
    /// Simulate one trial at the scenario's n and write it as CSV.
    Simulate(Common),
    /// Fit the latent model to a dataset.
    Fit(Common),
    /// Empirical power by simulate-fit-test replication.
    Empirical(Common),
    /// Regenerate a reference table or curve set and check it.
    Reproduce {
        /// muse-table1, muse-table2, figure1 or appendix-emppower
        target: Target,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Significance level (one-sided unless --two-sided).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    two_sided: bool,
    /// Also write the output to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Absolute error target of the normal-probability integrator.
    #[arg(long)]
    accuracy: Option<f64>,
    /// Dataset for `fit`, overriding the scenario.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Composite variance scale, overriding the scenario.
    #[arg(long)]
    sigma_sq: Option<f64>,
}

impl From<Common> for Flags {
    fn from(c: Common) -> Self {
        Flags {
            scenario: c.scenario,
            seed: c.seed,
            reps: c.reps,
            alpha: c.alpha,
            two_sided: c.two_sided,
            out: c.out,
            format: c.format,
            accuracy: c.accuracy,
            data: c.data,
            sigma_sq: c.sigma_sq,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (flags, result): (Flags, _) = match cli.command {
        Command::Reproduce { target, common } => {
            let f = Flags::from(common);
            let r = commands::reproduce(target, &f);
            (f, r)
        }
        Command::Validate(c) => run(c, commands::validate),
        Command::Power(c) => run(c, commands::power),
        Command::Samplesize(c) => run(c, commands::samplesize),
        Command::Simulate(c) => run(c, commands::simulate),
        Command::Fit(c) => run(c, commands::fit),
        Command::Empirical(c) => run(c, commands::empirical),
    };
    match result {
        Ok(Output { text, failures }) => {
            if let Some(path) = &flags.out {
                if let Err(e) = std::fs::write(path, &text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            print!("{text}");
            if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} cell(s) outside tolerance:", failures.len());
                for f in &failures {
                    eprintln!("  {f}");
                }
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn run(c: Common, f: fn(&Flags) -> mixendpoint::error::Result<Output>) -> (Flags, mixendpoint::error::Result<Output>) {
    let flags = Flags::from(c);
    let r = f(&flags);
    (flags, r)
}
