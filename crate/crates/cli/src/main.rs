//! `mixbath` — simulate multi-qubit systems coupled to mixed Markovian and
//! spin-star heat baths, and verify the structural invariants of the model.
//!
//! Exit codes: 0 on success with no invariant violations, 1 when a run
//! completes but violations (or failed checks) are reported, 2 on
//! configuration errors or numerical instability.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixbath::runner::{apply_overrides, parse_config, run_to_files, Overrides, PRESET_NAMES};
use mixbath::verify::{all_passed, report, run_verification, Faults};
use mixbath::Error;

#[derive(Parser)]
#[command(
    name = "mixbath",
    version,
    about = "Heat transport through qubits coupled to Markovian and spin-star baths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a trajectory and write observables to CSV (plus a plot script).
    Simulate(SimulateArgs),
    /// Run the invariant check suite on a configuration and report pass/fail.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset name (fig2a, fig2b, fig2c, all_markov) or path to a config file.
    config: String,
    /// Output CSV path; a matching `<stem>_plot.py` is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Preset name (fig2a, fig2b, fig2c, all_markov) or path to a config file.
    config: String,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args, Default)]
struct OverrideArgs {
    /// Spins per spin-star bath.
    #[arg(long)]
    n_spins: Option<usize>,
    /// Integrator step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time of the run.
    #[arg(long)]
    t_max: Option<f64>,
    /// Record every k-th step.
    #[arg(long)]
    stride: Option<usize>,
    /// Weight splitting the free evolution between bath channels (0..=1).
    #[arg(long)]
    p: Option<f64>,
    /// Eigenvalue floor used inside logarithms.
    #[arg(long)]
    eps_log: Option<f64>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            n_spins: a.n_spins,
            dt: a.dt,
            t_max: a.t_max,
            stride: a.stride,
            p_weight: a.p,
            eps_log: a.eps_log,
        }
    }
}

fn load_config(
    source: &str,
    overrides: &OverrideArgs,
) -> Result<mixbath::model::SimulationConfig, Error> {
    let mut cfg = parse_config(source)?;
    apply_overrides(&mut cfg, &overrides.into())?;
    Ok(cfg)
}

fn simulate(args: &SimulateArgs) -> Result<ExitCode, Error> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let outcome = run_to_files(&cfg, &args.out)?;
    println!(
        "wrote {} samples over t in [0, {}] to {}",
        outcome.records.len(),
        cfg.integrator.t_max,
        args.out.display()
    );
    println!(
        "steps: {}, max per-step trace drift: {:.3e}",
        outcome.stats.steps, outcome.stats.max_step_drift
    );
    if outcome.violations.is_empty() {
        println!("no invariant violations");
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &outcome.violations {
            eprintln!("violation: {v}");
        }
        Ok(ExitCode::from(1))
    }
}

fn verify(args: &VerifyArgs) -> Result<ExitCode, Error> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let outcomes = run_verification(&cfg, &Faults::default())?;
    print!("{}", report(&outcomes));
    if all_passed(&outcomes) {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    mixbath::exec::init_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Verify(args) => verify(args),
    };
    match result {
        Ok(code) => code,
        Err(Error::Unstable {
            t_last_good,
            drift,
            limit,
        }) => {
            eprintln!(
                "error: integration became unstable (trace drift {drift:.3e} exceeded \
                 {limit:.1e}); last good time t = {t_last_good}"
            );
            eprintln!("hint: reduce --dt or --t-max");
            ExitCode::from(2)
        }
        Err(Error::Config(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("presets: {}", PRESET_NAMES.join(", "));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
