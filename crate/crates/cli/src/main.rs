use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use odcsa_cli::commands::{self, PredSource};
use odcsa_cli::Config;

#[derive(Parser)]
#[command(
    name = "odcsa",
    version,
    about = "Train, evaluate and verify the ODC-SA segmentation network"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic polyp-like dataset (plus rotated copies)
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a key=value config file
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score predictions against a dataset and write the metric CSV
    Eval(EvalArgs),
    /// Write the probability map of one image as P5
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks
    Gradcheck {
        /// Check name or "all"
        #[arg(long, default_value = "all")]
        block: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter and multiply-accumulate accounting
    Flops {
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Ablation row a-e
        #[arg(long, default_value_t = 'a')]
        row: char,
    },
    /// Configuration utilities
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to run on every image
    #[arg(long, required_unless_present = "preds", conflicts_with = "preds")]
    ckpt: Option<PathBuf>,
    /// Directory of saved <id>.pgm probability maps
    #[arg(long)]
    preds: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print every key with its resolved value
    Dump {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut out = io::stdout().lock();
    match cli.cmd {
        Cmd::Synth {
            out: dir,
            n,
            size,
            seed,
        } => commands::synth(&dir, n, size, seed, &mut out)?,
        Cmd::Train { config } => {
            commands::train_cmd(&config, &mut out)?;
        }
        Cmd::Eval(a) => {
            let source = match (&a.ckpt, &a.preds) {
                (Some(c), _) => PredSource::Checkpoint(c),
                (None, Some(p)) => PredSource::Maps(p),
                (None, None) => bail!("eval needs --ckpt or --preds"),
            };
            commands::eval(source, &a.data, &a.report, &mut out)?;
        }
        Cmd::Predict { ckpt, image, out: dest } => commands::predict(&ckpt, &image, &dest, &mut out)?,
        Cmd::Gradcheck { block, seed } => {
            if !commands::gradcheck(&block, seed, &mut out)? {
                bail!("gradcheck: max relative error reached the 1e-4 threshold");
            }
        }
        Cmd::Flops { size, row } => commands::flops(size, row, &mut out)?,
        Cmd::Config {
            action: ConfigAction::Dump { config },
        } => {
            let cfg = match config {
                Some(p) => Config::from_file(&p)?,
                None => Config::default(),
            };
            write!(out, "{}", cfg.dump())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
