//! `safediff`: train, sample, optimize and evaluate with the masked-diffusion
//! fragment generator.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use config::Overrides;
use error::CliError;

#[derive(Parser)]
#[command(name = "safediff", version, about = "Fragment-based masked diffusion for molecules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a denoiser on a corpus and write a checkpoint.
    Train(Common),
    /// Sample molecules for a generation task.
    Generate(Common),
    /// Run the fragment-vocabulary optimizer against a property oracle.
    Optimize(Common),
    /// Compute set metrics for a file of molecules.
    Eval(Common),
    /// Run quick built-in consistency checks.
    Selftest(Common),
}

/// Options shared by every subcommand. Dedicated flags are applied after
/// `--set`, so they win.
#[derive(Args)]
struct Common {
    /// JSON config file with a flat object of settings.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set tau=0.8` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sample from the exact posterior over this corpus instead of a checkpoint.
    #[arg(long)]
    oracle_corpus: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Guidance strength w.
    #[arg(long)]
    mcg_w: Option<f64>,
    /// Guidance masking ratio gamma.
    #[arg(long)]
    mcg_gamma: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<config::RunConfig, CliError> {
        let mut o = Overrides::default();
        for s in &self.set {
            o.push_assignment(s)?;
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| Value::String(p.display().to_string()));
        let fields = [
            ("seed", self.seed.map(Value::from)),
            ("corpus", path(&self.corpus)),
            ("checkpoint", path(&self.checkpoint)),
            ("oracle_corpus", path(&self.oracle_corpus)),
            ("out_dir", path(&self.out_dir)),
            ("task", self.task.clone().map(Value::String)),
            ("mode", self.mode.clone().map(Value::String)),
            ("w", self.mcg_w.map(Value::from)),
            ("gamma", self.mcg_gamma.map(Value::from)),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                o.push(k, v);
            }
        }
        config::load(self.config.as_deref(), &o)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => commands::train(&c.load()?),
        Command::Generate(c) => commands::generate(&c.load()?),
        Command::Optimize(c) => commands::optimize(&c.load()?),
        Command::Eval(c) => commands::eval(&c.load()?),
        Command::Selftest(c) => commands::selftest(&c.load()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
