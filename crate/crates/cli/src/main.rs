//! Experiment runner for the svi solver library.
//!
//! Exit codes: 0 success, 2 configuration error, 3 divergence in at least
//! one trial, 4 internal error.

mod config;
mod report;
mod runner;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "svi", version, about = "Solvers for monotone stochastic variational inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum concurrent trials (overrides the config).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Evaluate the gap function of a point on a serialized problem.
    Gap {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        point: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 20_000)]
        iters: usize,
    },
    /// Render a comparison table over summary.csv files.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Check a config (including step admissibility) without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            parallel,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: reading {}: {e}", config.display());
                    return Ok(ExitCode::from(EXIT_CONFIG));
                }
            };
            let mut exp = match config::parse_config(&text) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    return Ok(ExitCode::from(EXIT_CONFIG));
                }
            };
            if let Some(p) = parallel {
                exp.parallelism = p.max(1);
            }
            let out_dir = out
                .or_else(|| exp.output_dir.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("svi-out"));
            let outcome = runner::run_experiment(&mut exp, &out_dir)?;
            println!(
                "{} trials written to {}",
                outcome.trials,
                out_dir.display()
            );
            if outcome.divergences.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (kind, seed, err) in &outcome.divergences {
                    eprintln!("diverged: {kind} seed {seed}: {err}");
                }
                Ok(ExitCode::from(EXIT_DIVERGED))
            }
        }
        Command::Gap {
            problem,
            point,
            tol,
            iters,
        } => {
            let ptext = std::fs::read_to_string(&problem)
                .with_context(|| format!("reading {}", problem.display()));
            let xtext = std::fs::read_to_string(&point)
                .with_context(|| format!("reading {}", point.display()));
            let (ptext, xtext) = match (ptext, xtext) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    eprintln!("error: {e:#}");
                    return Ok(ExitCode::from(EXIT_CONFIG));
                }
            };
            let prob = match svi_core::format::parse_problem::<f64>(&ptext) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("problem file error: {e}");
                    return Ok(ExitCode::from(EXIT_CONFIG));
                }
            };
            let x = match svi_core::format::parse_point::<f64>(&xtext) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("point file error: {e}");
                    return Ok(ExitCode::from(EXIT_CONFIG));
                }
            };
            let est = svi_core::metrics::gap(&prob, &x, tol, iters)?;
            let feas = svi_core::projections::dist_to_set(prob.feasible_set(), &x)?;
            println!("gap = {:.16e}", est.value);
            println!("stationarity_residual = {:.3e}", est.certificate_residual);
            println!("feasibility_residual = {feas:.3e}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { summaries } => {
            let loaded: Result<Vec<_>> = summaries.iter().map(|p| report::load_summary(p)).collect();
            match loaded.and_then(|s| report::compare_report(&s)) {
                Ok(table) => {
                    print!("{table}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("compare error: {e:#}");
                    Ok(ExitCode::from(EXIT_CONFIG))
                }
            }
        }
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: reading {}: {e}", config.display());
                    return Ok(ExitCode::from(EXIT_CONFIG));
                }
            };
            match config::parse_config(&text) {
                Ok(exp) => {
                    println!(
                        "ok: {} scheme(s) x {} seed(s) on {} (n = {}), K = {}",
                        exp.schemes.len(),
                        exp.seeds.len(),
                        exp.problem_id,
                        exp.problem.dim(),
                        exp.iterations
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    Ok(ExitCode::from(EXIT_CONFIG))
                }
            }
        }
    }
}
