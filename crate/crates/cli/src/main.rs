mod attack;
mod error;
mod gen;
mod inspect;
mod report;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "seqadv", version, about = "Train small RNNs and craft adversarial sequences against them")]
struct Cli {
    /// Seed all randomness flows from (overrides a seed in --config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with the command's parameters; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for per-input attacks.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[command(subcommand)]
        kind: gen::GenKind,
    },
    /// Train a model on a dataset.
    Train {
        #[command(subcommand)]
        kind: train::TrainKind,
    },
    /// Craft adversarial inputs against a trained model.
    Attack {
        #[command(subcommand)]
        kind: attack::AttackKind,
    },
    /// Dump the input-output Jacobian for one input as CSV.
    Jacobian(inspect::JacobianArgs),
    /// Evaluate a model on a dataset.
    Eval(inspect::EvalArgs),
}

/// Global options every command sees.
pub struct Ctx {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: report::Out,
    pub jobs: Option<usize>,
}

/// Model and data files shared by commands that consume a trained model.
#[derive(Args, Clone)]
pub struct ModelData {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Pair CSV (sequential model) or `label<TAB>text` corpus (classifier).
    #[arg(long)]
    pub data: PathBuf,
    /// Dictionary file; required with a classifier.
    #[arg(long)]
    pub dict: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Ctx {
        seed: cli.seed,
        config: cli.config,
        out: report::Out(cli.out),
        jobs: cli.jobs,
    };
    if ctx.jobs == Some(0) {
        return Err(CliError::usage("--jobs must be positive"));
    }
    report::ensure_dir(&ctx.out.0)?;
    match cli.command {
        Command::Gen { kind } => gen::run(&ctx, kind),
        Command::Train { kind } => train::run(&ctx, kind),
        Command::Attack { kind } => attack::run(&ctx, kind),
        Command::Jacobian(args) => inspect::jacobian(&ctx, args),
        Command::Eval(args) => inspect::eval(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
