mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CliConfig, Overrides};
use error::CliResult;

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  internal error
  2  configuration error (bad or missing config, checkpoint/config mismatch)
  3  data or I/O error (unreadable or corrupt files)
  4  numeric failure (diverged training, singular system)

Set SPECFEW_LOG (error, warn, info, debug, trace) to control logging.";

#[derive(Parser)]
#[command(name = "specfew", version, about = "Few-shot evaluation with spectral regularization, blending and label propagation", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (1 runs sequentially).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train an ensemble on the source domain and write a checkpoint.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Train without the spectral penalty (lambda = 0).
        #[arg(long)]
        no_bsr: bool,
    },
    /// Evaluate variants on sampled target episodes and write reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory; repeat for several. Missing models are trained.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Write synthetic source/target CSV tables.
    GenData {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> CliResult<CliConfig> {
    let cfg = CliConfig::load(
        common.config.as_deref(),
        &Overrides {
            seed: common.seed,
            workers: common.workers,
        },
    )?;
    log::info!("resolved config:\n{}", cfg.to_json().trim_end());
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Pretrain { common, no_bsr } => {
            let cfg = resolve(&common)?;
            if no_bsr {
                log::info!("--no-bsr: pre-training with lambda = 0");
            }
            commands::pretrain(&cfg, &common.out.unwrap_or_else(|| "checkpoint".into()), no_bsr)
        }
        Command::Evaluate { common, checkpoints } => {
            let cfg = resolve(&common)?;
            commands::evaluate(&cfg, &checkpoints, &common.out.unwrap_or_else(|| "results".into())).map(|_| ())
        }
        Command::GenData { common } => {
            let cfg = resolve(&common)?;
            commands::gen_data(&cfg, &common.out.unwrap_or_else(|| "data".into()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPECFEW_LOG", "info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("specfew: {e}");
            ExitCode::from(e.code)
        }
    }
}
