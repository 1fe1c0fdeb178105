use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gridtune_cli::commands;
use gridtune_cli::config::{ExperimentConfig, Overrides};
use gridtune_cli::error::{CliError, Result};
use gridtune_core::reg::Method;

#[derive(Parser)]
#[command(
    name = "gridtune",
    version,
    about = "Disentanglement experiments on an enumerable melody grid"
)]
struct Cli {
    /// Output root (falls back to $GRIDTUNE_OUT, then ./gridtune-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config file with [dataset]/[train]/[model]/[eval] key = value sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset applied before flag overrides (available: desk)
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Selects one trained run out of the sweep.
#[derive(Args)]
struct Selector {
    /// Method of the run to load (beta-vae, i-vae, s2-vae, ar-vae)
    #[arg(long, default_value = "beta-vae")]
    method: String,
    /// Regularization strength of the run to load
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Training seed of the run to load
    #[arg(long, default_value_t = 0)]
    run_seed: u64,
    /// Attribute name (tonic, octave, scale, rhythm1, rhythm2, arp1..arp4)
    #[arg(long)]
    attr: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the melody grid into a dataset file with fixed splits
    GenData(Overrides),
    /// Train one checkpoint per (method, gamma, seed) in the sweep
    Train {
        #[command(flatten)]
        ov: Overrides,
        /// Continue from existing checkpoints instead of starting over
        #[arg(long)]
        resume: bool,
    },
    /// Score every checkpoint and append one row per run to the results table
    Eval(Overrides),
    /// Decode a six-step sweep along an attribute's regularized coordinate
    Traverse {
        #[command(flatten)]
        sel: Selector,
        /// Test-split record whose posterior mean anchors the sweep
        #[arg(long, default_value_t = 0)]
        base_index: usize,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Read decoded attribute values over the (regularized, free) latent plane
    Surface {
        #[command(flatten)]
        sel: Selector,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Scatter test-split posterior means over the same latent plane
    Project {
        #[command(flatten)]
        sel: Selector,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Aggregate the results table and change matrices across seeds
    Report(Overrides),
}

fn parse_method(s: &str) -> Result<Method> {
    Method::parse(s).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown method '{s}' (expected one of beta-vae, i-vae, s2-vae, ar-vae)"
        ))
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    let resolve = |ov: &Overrides| {
        ExperimentConfig::resolve(
            cli.config.as_deref(),
            cli.preset.as_deref(),
            cli.out.clone(),
            ov,
        )
    };
    match &cli.cmd {
        Cmd::GenData(ov) => commands::gen_data::run(&resolve(ov)?),
        Cmd::Train { ov, resume } => commands::train::run(&resolve(ov)?, *resume),
        Cmd::Eval(ov) => commands::eval::run(&resolve(ov)?),
        Cmd::Traverse {
            sel,
            base_index,
            ov,
        } => commands::traverse::run(
            &resolve(ov)?,
            parse_method(&sel.method)?,
            sel.gamma,
            sel.run_seed,
            &sel.attr,
            *base_index,
        ),
        Cmd::Surface { sel, ov } => commands::surface::run(
            &resolve(ov)?,
            parse_method(&sel.method)?,
            sel.gamma,
            sel.run_seed,
            &sel.attr,
        ),
        Cmd::Project { sel, ov } => commands::project::run(
            &resolve(ov)?,
            parse_method(&sel.method)?,
            sel.gamma,
            sel.run_seed,
            &sel.attr,
        ),
        Cmd::Report(ov) => commands::report::run(&resolve(ov)?),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
