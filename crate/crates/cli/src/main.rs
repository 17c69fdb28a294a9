use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use laser_relay_cli::config::{load_config, ExperimentConfig, SolverChoice, WeatherArg};
use laser_relay_cli::{emit, run, CliError};

/// Optimize trajectory and powers of a laser-charged UAV relay.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// TOML experiment file; omitted keys take nominal values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    solver: Option<SolverChoice>,
    /// Objective weight of the power-transfer efficiency; repeat or comma-separate to sweep.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Laser wavelength in nm (810 or 1550).
    #[arg(long)]
    wavelength: Option<u32>,
    #[arg(long, value_enum)]
    weather: Option<WeatherArg>,
}

fn apply(args: Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.solver {
        cfg.solver = s;
    }
    if !args.gamma.is_empty() {
        cfg.gammas = args.gamma;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.tol.is_some() {
        cfg.tol = args.tol;
    }
    if args.max_iters.is_some() {
        cfg.max_iters = args.max_iters;
    }
    if let Some(w) = args.wavelength {
        cfg.laser.wavelength_nm = w;
    }
    if let Some(w) = args.weather {
        cfg.laser.weather = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let cfg = apply(args)?;
    let outcomes = run::run(&cfg)?;
    emit::emit(&cfg, &outcomes, &cfg.out)?;
    let mut failed = 0;
    for o in &outcomes {
        let s = emit::summary(o);
        match (&s.objective, &s.error) {
            (Some(v), _) => println!(
                "{:<5} gamma={:<7} {}  objective={v:.4}  iterations={}  feasible={}",
                s.solver,
                s.gamma,
                s.tag,
                s.iterations.unwrap_or(0),
                s.feasible.unwrap_or(false)
            ),
            (None, e) => {
                failed += 1;
                println!("{:<5} gamma={:<7} {}  FAILED: {}", s.solver, s.gamma, s.tag, e.as_deref().unwrap_or(""));
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Solver {
            failed,
            total: outcomes.len(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
