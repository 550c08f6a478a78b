//! Command-line runner for the JFSCE Monte Carlo studies.
//!
//! Exit codes: 0 on success, 1 on configuration errors (including unknown
//! methods or experiments), 2 on runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jfsce_cli::config::{
    parse_config, parse_methods, CliOverrides, ExperimentConfig, ExperimentId, Scale,
};
use jfsce_cli::experiments;

#[derive(Parser)]
#[command(
    name = "jfsce",
    about = "Joint frame synchronization and channel estimation experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment section in a config file and write CSVs.
    Run {
        /// Path to a `key = value` config file with [experiment.<id>] sections.
        config: PathBuf,
        /// Base seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Trial-count override for every experiment.
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory for CSV files.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Comma-separated method subset (e.g. `omp,classical,ideal`).
        #[arg(long)]
        methods: Option<String>,
        /// Problem scale: `paper` or `small`.
        #[arg(long)]
        scale: Option<String>,
        /// Write zeros to the wall-time columns so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// List the available experiments.
    ListExperiments,
    /// Print the resolved defaults of one experiment.
    Describe {
        /// Experiment id, e.g. `mse-vs-sparsity`.
        experiment: String,
        /// Problem scale: `paper` or `small`.
        #[arg(long, default_value = "paper")]
        scale: String,
    },
    /// Run only the loopback experiments from a config file.
    Loopback {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Dump the loopback symbol stream as interleaved f32 I/Q with a
        /// text sidecar, one file per trial, under this path prefix.
        #[arg(long)]
        iq_dump: Option<String>,
        #[arg(long)]
        no_timing: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap renders its own message; argument problems are config
            // errors (exit 1), --help/--version are successes
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum AppError {
    Config(String),
    Runtime(String),
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            out,
            methods,
            scale,
            no_timing,
        } => {
            let experiments =
                load_experiments(&config, seed, trials, methods, scale, no_timing, None)?;
            execute(&experiments, &out)
        }
        Command::ListExperiments => {
            for id in ExperimentId::ALL {
                println!("{id}");
            }
            Ok(())
        }
        Command::Describe { experiment, scale } => {
            let id = ExperimentId::parse(&experiment).ok_or_else(|| {
                AppError::Config(format!(
                    "unknown experiment '{experiment}' (valid: {})",
                    ExperimentId::ALL.map(|e| e.name()).join(", ")
                ))
            })?;
            let scale = Scale::parse(&scale)
                .ok_or_else(|| AppError::Config(format!("unknown scale '{scale}'")))?;
            print!("{}", ExperimentConfig::defaults(id, scale).describe());
            Ok(())
        }
        Command::Loopback {
            config,
            seed,
            trials,
            out,
            iq_dump,
            no_timing,
        } => {
            let mut experiments =
                load_experiments(&config, seed, trials, None, None, no_timing, iq_dump)?;
            experiments.retain(|e| {
                matches!(e.id, ExperimentId::EqTaps | ExperimentId::LoopbackIndex)
            });
            if experiments.is_empty() {
                return Err(AppError::Config(
                    "config contains no loopback experiments (eq-taps, loopback-index)".into(),
                ));
            }
            execute(&experiments, &out)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn load_experiments(
    config_path: &PathBuf,
    seed: Option<u64>,
    trials: Option<usize>,
    methods: Option<String>,
    scale: Option<String>,
    no_timing: bool,
    iq_dump: Option<String>,
) -> Result<Vec<ExperimentConfig>, AppError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| AppError::Config(format!("reading {}: {e}", config_path.display())))?;
    let methods = match methods {
        Some(list) => Some(parse_methods(&list).map_err(AppError::Config)?),
        None => None,
    };
    let scale = match scale {
        Some(s) => Some(Scale::parse(&s).ok_or_else(|| {
            AppError::Config(format!("unknown scale '{s}' (valid: paper, small)"))
        })?),
        None => None,
    };
    let overrides = CliOverrides {
        seed,
        trials,
        methods,
        scale,
        no_timing,
    };
    let mut experiments = parse_config(&text, &overrides)
        .map_err(AppError::Config)?
        .experiments;
    if let Some(prefix) = iq_dump {
        for e in experiments.iter_mut() {
            e.iq_dump = Some(prefix.clone());
        }
    }
    Ok(experiments)
}

fn execute(experiments: &[ExperimentConfig], out: &PathBuf) -> Result<(), AppError> {
    let written = experiments::run_all(experiments, out)
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}
