use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ota_dp::harness::{
    aggregate_trials, optimize_command, read_results, run_experiment, train_command, write_results, write_summary,
    ExperimentSpec, FigureId, OptimizeReport, Scheme, DEFAULT_TRIALS,
};
use ota_dp::model::SystemConfig;
use ota_dp::{Error, Result};

/// Differentially private over-the-air federated learning: transceiver
/// design, training simulation and Monte Carlo experiments.
#[derive(Parser)]
#[command(name = "ota-dp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design transceivers for the scenario described by a configuration.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mimo_dp")]
        scheme: Scheme,
    },
    /// Run over-the-air training with a design written by `optimize`.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the loss trajectory as `round,loss,gap` CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run a seeded Monte Carlo experiment and write one row per trial.
    Experiment {
        #[arg(long)]
        figure: FigureId,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Base scenario; defaults to the built-in one.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated schemes; defaults to all four.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// Comma-separated sweep values; defaults to the figure's grid.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
    /// Aggregate a results file into per-(scheme, sweep point) statistics.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the default configuration as JSON.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Outcome {
    Ok,
    Infeasible,
}

fn read_config(path: &Path) -> Result<SystemConfig> {
    SystemConfig::from_json(&fs::read_to_string(path)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Optimize { config, out, scheme } => {
            let report = match optimize_command(&read_config(&config)?, scheme) {
                Err(Error::Infeasible(msg)) => {
                    eprintln!("ota-dp: {msg}");
                    return Ok(Outcome::Infeasible);
                }
                other => other?,
            };
            write_json(&out, &report)?;
            Ok(if report.feasible { Outcome::Ok } else { Outcome::Infeasible })
        }
        Command::Train { config, design, out, trajectory } => {
            let cfg = read_config(&config)?;
            let report: OptimizeReport = serde_json::from_reader(BufReader::new(File::open(design)?))?;
            let trained = train_command(&cfg, &report)?;
            write_json(&out, &trained)?;
            if let Some(path) = trajectory {
                trained.result.write_csv(BufWriter::new(File::create(path)?))?;
            }
            Ok(Outcome::Ok)
        }
        Command::Experiment { figure, trials, seed, out, config, schemes, sweep } => {
            let mut spec = ExperimentSpec::new(figure, trials, seed);
            if let Some(path) = config {
                spec.base = read_config(&path)?;
            }
            if let Some(s) = schemes {
                spec.schemes = s;
            }
            if let Some(s) = sweep {
                spec.sweep = s;
            }
            let rows = run_experiment(&spec)?;
            write_results(&rows, BufWriter::new(File::create(out)?))?;
            Ok(if rows.iter().any(|r| r.feasible) { Outcome::Ok } else { Outcome::Infeasible })
        }
        Command::Summarize { input, out } => {
            let rows = read_results(BufReader::new(File::open(input)?))?;
            write_summary(&aggregate_trials(&rows), BufWriter::new(File::create(out)?))?;
            Ok(Outcome::Ok)
        }
        Command::InitConfig { out } => {
            fs::write(out, SystemConfig::reference().to_json()?)?;
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => {
            eprintln!("ota-dp: no feasible design");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ota-dp: {e}");
            ExitCode::from(1)
        }
    }
}
