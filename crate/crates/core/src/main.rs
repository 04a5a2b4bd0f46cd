use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coldwave::harness::{epsilon_study, probe_table_csv, refine_study, steepening_probe};
use coldwave::output::{self, exit_code_for_error, EXIT_STUDY_FAILED};
use coldwave::{Execution, Result, SolverConfig};

#[derive(Parser)]
#[command(name = "coldwave", version, about = "Cold-plasma Euler-Maxwell solver and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run independent study members one at a time.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration and write timeseries, snapshots and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Spatial self-convergence up to the config's t_max.
    Refine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Distance of mollified runs from the plain run at t_max.
    EpsilonStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        epsilons: Vec<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Slope-guard table for u0 = -a sin x.
    ProbeSteepening {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        amplitudes: Vec<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn load(path: &Path, output_dir: Option<PathBuf>) -> Result<SolverConfig> {
    let mut config = SolverConfig::from_path(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    Ok(config)
}

fn write_report(config: &SolverConfig, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

fn execute(cli: Cli) -> Result<i32> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Run { config, output_dir } => {
            let config = load(&config, output_dir)?;
            let outcome = output::run(&config)?;
            let reason = outcome.stop_reason.map_or("refused", |r| r.as_str());
            println!(
                "{reason}: t = {}, {} rows written to {}",
                outcome.final_time,
                outcome.rows,
                outcome.output_dir.display()
            );
            if let Some(msg) = &outcome.message {
                eprintln!("{msg}");
            }
            Ok(outcome.exit_code)
        }
        Command::Refine { config, levels, output_dir } => {
            let config = load(&config, output_dir)?;
            let report = refine_study(&config, &levels, config.t_max, exec)?;
            let path = write_report(&config, "refine.csv", &report.to_csv())?;
            print!("{}", report.to_csv());
            println!("written to {}", path.display());
            Ok(0)
        }
        Command::EpsilonStudy { config, epsilons, output_dir } => {
            let config = load(&config, output_dir)?;
            let report = epsilon_study(&config, &epsilons, config.t_max, exec)?;
            let body = format!("{}# verdict: {}\n", report.convergence.to_csv(), report.verdict());
            let path = write_report(&config, "epsilon_study.csv", &body)?;
            print!("{body}");
            println!("written to {}", path.display());
            Ok(if report.monotone { 0 } else { EXIT_STUDY_FAILED })
        }
        Command::ProbeSteepening { config, amplitudes, output_dir } => {
            let config = load(&config, output_dir)?;
            let rows = steepening_probe(&config, &amplitudes, exec)?;
            let body = probe_table_csv(&rows);
            let path = write_report(&config, "steepening_probe.csv", &body)?;
            print!("{body}");
            println!("written to {}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for_error(&err)
        }
    };
    ExitCode::from(code as u8)
}
