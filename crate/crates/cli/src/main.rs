//! `fxtf`: generate curve datasets, train and evaluate the extrapolation
//! transformers, run the invariant suite, and plot results.

mod commands;
mod config;
mod error;
mod plot;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use config::{apply, preset, preset_names, OUT_ROOT_ENV};
use error::CliError;
use fxtf_core::curve::CurveClass;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "fxtf",
    version,
    about = "Scalar function extrapolation with relational and windowed transformers"
)]
struct Cli {
    /// TOML config file (strict schema; overlays the preset)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset: desk-/paper- x 1d/1d-window/relational/relational-window
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed (curve stream and model init)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $FXTF_OUT_ROOT or ./runs, plus a run name)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for evaluation
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample curves and write dataset.csv plus a JSON parameter sidecar
    Generate {
        /// Number of curves
        #[arg(long)]
        n: usize,
        /// Force a single class (lin, sine, rbf)
        #[arg(long)]
        class: Option<CurveClass>,
        /// Exact per-class counts instead of probabilistic class draws
        #[arg(long)]
        stratified: bool,
    },
    /// Train a model; writes checkpoints, loss.csv and train_report.json
    Train {
        /// Continue from the latest checkpoint in the output directory
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate checkpoints: detail.csv, table CSVs and eval_report.json
    Eval {
        /// Checkpoint files (grouped by variant/window across seeds)
        checkpoints: Vec<PathBuf>,
        /// Only compute the optimal-uncertainty row
        #[arg(long)]
        oracle_only: bool,
    },
    /// Run the full invariant suite and print a checklist
    Verify,
    /// Render SVG plots from an evaluation detail.csv
    Plot {
        /// Detail CSV produced by `fxtf eval`
        detail_csv: PathBuf,
    },
}

fn resolve_config(cli: &Cli) -> Result<config::RunConfig, CliError> {
    let mut cfg = config::RunConfig::default();
    if let Some(name) = &cli.preset {
        let overlay = preset(name).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown preset '{name}'; available: {}",
                preset_names().join(", ")
            ))
        })?;
        apply(&mut cfg, overlay);
    }
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        let overlay: config::PartialRunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        apply(&mut cfg, overlay);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn default_out_dir(cli: &Cli, cfg: &config::RunConfig, cmd: &str) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    let root = std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    let tag = cli
        .preset
        .clone()
        .or_else(|| cli.config.is_some().then(|| "custom".to_string()))
        .unwrap_or_else(|| "default".to_string());
    root.join(format!("{cmd}-{tag}-seed{}", cfg.seed))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Generate {
            n,
            class,
            stratified,
        } => {
            let out = default_out_dir(&cli, &cfg, "generate");
            commands::cmd_generate(&cfg, &out, *n, *class, *stratified)
        }
        Command::Train { resume } => {
            let out = default_out_dir(&cli, &cfg, "train");
            commands::cmd_train(&cfg, &out, *resume)
        }
        Command::Eval {
            checkpoints,
            oracle_only,
        } => {
            let out = default_out_dir(&cli, &cfg, "eval");
            commands::cmd_eval(&cfg, &out, checkpoints, *oracle_only)
        }
        Command::Verify => commands::cmd_verify(),
        Command::Plot { detail_csv } => {
            let out = default_out_dir(&cli, &cfg, "plot");
            commands::cmd_plot(detail_csv, &out)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
