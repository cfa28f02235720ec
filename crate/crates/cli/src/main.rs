mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sglayout::{Error, Variant};

use commands::Split;
use config::RunConfig;

const DATA_DIR_ENV: &str = "SGLAYOUT_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "sglayout",
    version,
    about = "Scene-graph layout prediction with triplet supervision"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// baseline, triplet or triplet_da.
    #[arg(long)]
    variant: Option<String>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct DataArgs {
    /// Data directory (defaults to $SGLAYOUT_DATA_DIR, then ./data).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes and scene graphs.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Output directory (defaults to the data directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model variant.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Run directory (defaults to <data>/<variant>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute mIoU and relation scores.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint (defaults to <data>/<variant>/checkpoint.json).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Directory for metrics.json (defaults to the checkpoint's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear probe, embedding export, heatmap and cluster tree.
    Probe {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Output directory (defaults to <checkpoint dir>/probe).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve_config(common: &Common) -> sglayout::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &common.overrides {
        cfg.apply_override(pair)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &common.variant {
        cfg.variant = Variant::parse(v).ok_or_else(|| {
            Error::Config(format!(
                "--variant: expected baseline, triplet or triplet_da, got {v:?}"
            ))
        })?;
    }
    cfg.finalize();
    cfg.validate().map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    Ok(cfg)
}

fn data_dir(arg: &Option<PathBuf>) -> PathBuf {
    arg.clone()
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Unsatisfiable { .. } => 2,
        Error::Validation { .. } | Error::Parse { .. } | Error::Shape(_) => 3,
        Error::NonFinite { .. } | Error::NotScalar(_) => 4,
        Error::Io { .. } => 5,
    }
}

fn run(cli: Cli) -> sglayout::Result<()> {
    match cli.command {
        Command::Gen { common, out } => {
            let cfg = resolve_config(&common)?;
            let out = out.unwrap_or_else(|| data_dir(&None));
            commands::cmd_gen(&cfg, &out)
        }
        Command::Train { common, data, out } => {
            let cfg = resolve_config(&common)?;
            let data = data_dir(&data.data);
            let out = out.unwrap_or_else(|| commands::default_run_dir(&data, &cfg));
            commands::cmd_train(&cfg, &data, &out)
        }
        Command::Eval {
            common,
            data,
            ckpt,
            split,
            out,
        } => {
            let cfg = resolve_config(&common)?;
            let data = data_dir(&data.data);
            let ckpt = ckpt.unwrap_or_else(|| {
                commands::default_run_dir(&data, &cfg).join(commands::CHECKPOINT)
            });
            let out = out.unwrap_or_else(|| ckpt.parent().map(PathBuf::from).unwrap_or_default());
            commands::cmd_eval(&cfg, &data, &ckpt, split, &out)
        }
        Command::Probe {
            common,
            data,
            ckpt,
            split,
            out,
        } => {
            let cfg = resolve_config(&common)?;
            let data = data_dir(&data.data);
            let ckpt = ckpt.unwrap_or_else(|| {
                commands::default_run_dir(&data, &cfg).join(commands::CHECKPOINT)
            });
            let out = out.unwrap_or_else(|| {
                ckpt.parent()
                    .map(PathBuf::from)
                    .unwrap_or_default()
                    .join("probe")
            });
            commands::cmd_probe(&cfg, &data, &ckpt, split, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
