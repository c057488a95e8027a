//! `sspain`: generate data, train, evaluate and export saliency maps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (bad arguments
//! or configuration).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sspain_core::training::Variant;

use crate::config::{parse_config, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "sspain", version, about = "Saliency-supervised pain intensity regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// JSON run configuration; defaults are used for anything missing
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// dataset root (overrides `data` in the config)
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// output directory (overrides `out` in the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// hold out this subject: train on the rest, evaluate on it
    #[arg(long, global = true)]
    subject: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset tree under --data (or OUT/dataset)
    Synth,
    /// Train a model; writes model.ckpt and train.log.jsonl
    Train,
    /// Evaluate a checkpoint, or cross-validate with --loso
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// leave-one-subject-out cross-validation of the configured variant
        #[arg(long)]
        loso: bool,
    },
    /// Export saliency and attention maps of selected frames
    Saliency {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference check of every loss gradient on a toy model
    Gradcheck,
    /// EMD and mining against brute-force references
    Oracle,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = parse_config(cli.common.config.as_deref())?;
    if let Some(d) = cli.common.data {
        cfg.data = Some(d);
    }
    if let Some(o) = cli.common.out {
        cfg.out = o;
    }
    if let Some(v) = cli.common.variant {
        cfg.variant = v;
    }
    cfg.validate()?;
    cfg.write_echo()?;
    let subject = cli.common.subject.as_deref();
    match cli.command {
        Command::Synth => commands::synth(&cfg)?,
        Command::Train => commands::train_cmd(&cfg, subject)?,
        Command::Eval { checkpoint, loso } => commands::eval(&cfg, subject, checkpoint.as_deref(), loso)?,
        Command::Saliency { checkpoint } => commands::saliency(&cfg, subject, checkpoint.as_deref())?,
        Command::Gradcheck => return commands::gradcheck(&cfg),
        Command::Oracle => return commands::oracle(&cfg),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: checks failed");
            ExitCode::from(1)
        }
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
