use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hymlab_cli::{cmd_experiment, cmd_mavol, cmd_resume, cmd_solve, cmd_verify, CliError, CliResult, Context, ExperimentKind, RunConfig};

#[derive(Parser)]
#[command(name = "hymlab", version, about = "Hermitian metrics on bundles over flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Split,
    Extension,
    Shrink,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the continuity method from t = 0 to t = 1.
    Solve(RunArgs),
    /// Run the invariant suite.
    Verify(RunArgs),
    /// Evaluate and ascend the Monge-Ampere volume.
    Mavol(RunArgs),
    Experiment {
        #[arg(value_enum)]
        kind: Experiment,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Continue a continuity run from a checkpoint directory.
    Resume {
        #[arg(long)]
        resume: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn context(args: RunArgs) -> CliResult<Context> {
    Context::new(RunConfig::load(&args.config)?, args.out, args.seed)
}

fn run(cli: Cli) -> CliResult<i32> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Solve(a) => cmd_solve(&context(a)?),
        Command::Verify(a) => cmd_verify(&context(a)?),
        Command::Mavol(a) => cmd_mavol(&context(a)?),
        Command::Experiment { kind, args } => {
            let kind = match kind {
                Experiment::Split => ExperimentKind::Split,
                Experiment::Extension => ExperimentKind::Extension,
                Experiment::Shrink => ExperimentKind::Shrink,
            };
            cmd_experiment(&context(args)?, kind)
        }
        Command::Resume { resume, out } => cmd_resume(&resume, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
