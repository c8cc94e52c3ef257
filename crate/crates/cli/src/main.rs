//! Command-line runner for the coverage simulation: run a scenario, compare
//! the three methods, or validate a config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use d2oc::export::{export_csv, export_svg_heatmap};
use d2oc::runner::{run_scenario, trajectory_wasserstein, RunResult};
use d2oc::scenario::{load_scenario, Method, ScenarioConfig};
use d2oc::Error;

#[derive(Parser)]
#[command(name = "d2oc", about = "Multi-agent spray-drone coverage simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics.
    Run {
        /// Scenario file (TOML); an empty file runs the default scenario.
        config: PathBuf,
        /// Directory for CSV/SVG exports.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured method (d2oc|lm|smc).
        #[arg(long)]
        method: Option<String>,
        /// Override the configured RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run all three methods on one scenario and print a summary table.
    Compare {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario file, printing the effective config.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config { .. } | Error::Parse(_) | Error::InvalidField(_) => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            method,
            seed,
        } => {
            let mut cfg = load_scenario(&config)?;
            if let Some(m) = method {
                cfg.method = m.parse::<Method>()?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = run_scenario(&cfg)?;
            print_metrics_header();
            print_metrics_row(&result);
            if let Some(dir) = out {
                export_run(&result, &dir)?;
                println!("exports written to {}", dir.display());
            }
            Ok(())
        }
        Command::Compare { config, out } => {
            let base = load_scenario(&config)?;
            print_metrics_header();
            let mut d2oc_result = None;
            for method in [Method::Lm, Method::Smc, Method::D2oc] {
                let cfg = ScenarioConfig {
                    method,
                    ..base.clone()
                };
                let result = run_scenario(&cfg)?;
                print_metrics_row(&result);
                if let Some(dir) = &out {
                    export_run(&result, &dir.join(method.label()))?;
                }
                if method == Method::D2oc {
                    d2oc_result = Some(result);
                }
            }
            let result = d2oc_result.expect("d2oc ran");
            let w2 = trajectory_wasserstein(&result, &result.initial_cloud)?;
            println!("\ntrajectory W^2 (d2oc vs reference cloud): {w2:.4}");
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load_scenario(&config)?;
            println!("{}", cfg.to_toml());
            println!("# ok: {} steps, {} agents", cfg.steps(), cfg.n_agents);
            Ok(())
        }
    }
}

fn print_metrics_header() {
    println!(
        "{:<8} {:>6} {:>14} {:>14} {:>14}",
        "method", "seed", "dosage (g)", "max survival", "reduction (%)"
    );
}

fn print_metrics_row(result: &RunResult) {
    println!(
        "{:<8} {:>6} {:>14.2} {:>14.3} {:>14.2}",
        result.config.method.label(),
        result.config.seed,
        result.metrics.total_dosage_g,
        result.metrics.max_survival_density,
        result.metrics.reduction_rate_pct
    );
}

fn export_run(result: &RunResult, dir: &std::path::Path) -> Result<(), Error> {
    export_csv(result, dir)?;
    export_svg_heatmap(
        &result.grid.rho0,
        &result.grid.spec,
        &dir.join("density_initial.svg"),
    )?;
    export_svg_heatmap(
        &result.grid.rho_f,
        &result.grid.spec,
        &dir.join("survival.svg"),
    )?;
    Ok(())
}
