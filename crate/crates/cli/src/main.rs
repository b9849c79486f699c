use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

use gridnorm::model::NormalizeMethod;
use gridnorm_cli::commands;
use gridnorm_cli::config::{MethodList, RunConfig};
use gridnorm_cli::output::Sink;

#[derive(Parser)]
#[command(
    name = "gridnorm",
    version,
    about = "Marginal-variance normalization for lattice basis models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variance field of every level
    Normalize(Args),
    /// Timing grid over methods, r and n
    Bench(Args),
    /// Approximate versus reference variance fields
    Error(Args),
    /// Simulate, sample, fit, predict and score
    Pipeline(Args),
    /// Interpolation artifacts and the gradient comparison
    Figure(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write PNG heatmaps
    #[arg(long)]
    png: bool,
    /// Run on one thread
    #[arg(long)]
    deterministic: bool,
    /// Override the configured method(s)
    #[arg(long = "normalize-method", value_delimiter = ',')]
    normalize_method: Vec<NormalizeMethod>,
}

fn run(args: &Args, f: fn(&RunConfig, &Sink) -> Result<()>) -> Result<()> {
    if args.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()?;
    }
    let mut cfg = RunConfig::load(&args.config)?;
    if !args.normalize_method.is_empty() {
        cfg.normalize_method = MethodList::Many(args.normalize_method.clone());
        cfg.validate()?;
    }
    let sink = Sink::new(
        args.out.clone().unwrap_or_else(|| cfg.output.clone()),
        args.png,
    )?;
    f(&cfg, &sink)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Normalize(a) => run(a, commands::cmd_normalize),
        Command::Bench(a) => run(a, commands::cmd_bench),
        Command::Error(a) => run(a, commands::cmd_error),
        Command::Pipeline(a) => run(a, commands::cmd_pipeline),
        Command::Figure(a) => run(a, commands::cmd_figure),
    }
}
