use clap::{Parser, Subcommand};
use clfefa_cli::{CliError, RunConfig, cmd_evaluate, cmd_fit, cmd_grid, cmd_transform};
use std::path::PathBuf;
use std::process::ExitCode;

/// Contrastive feature extraction with adaptively learned sample graphs.
#[derive(Parser)]
#[command(name = "clfefa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the model file, fit report, and loss trace.
    Fit {
        /// Key=value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the run seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Repeated split/fit/1-NN evaluation with JSON and CSV reports.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cartesian hyperparameter search over the configured grids.
    Grid {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Embed a CSV of samples with a saved model.
    Transform {
        /// Model file written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Numeric CSV with a header row, samples as rows.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<(RunConfig, String), CliError> {
    let (mut config, mut echo) = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => {
            let config = RunConfig::default();
            let echo = config.render();
            (config, echo)
        }
    };
    if let Some(s) = seed {
        config.params.seed = s;
        config.split.seed = s;
        echo.push_str(&format!(
            "\n# seed overridden from the command line\nseed = {s}\nsplit.seed = {s}\n"
        ));
    }
    Ok((config, echo))
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit { config, out, seed } => {
            let (config, echo) = load_config(config.as_ref(), seed)?;
            cmd_fit(&config, &echo, &out)
        }
        Command::Evaluate { config, out, seed } => {
            let (config, echo) = load_config(config.as_ref(), seed)?;
            cmd_evaluate(&config, &echo, &out).map(|_| ())
        }
        Command::Grid { config, out, seed } => {
            let (config, echo) = load_config(config.as_ref(), seed)?;
            cmd_grid(&config, &echo, &out).map(|_| ())
        }
        Command::Transform { model, data, out } => cmd_transform(&model, &data, &out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
