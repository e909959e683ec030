use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use darcy_cli::{run, CliError, CliResult, Command, Config, ErrorKind, Output, THREADS_ENV};

#[derive(Parser)]
#[command(name = "darcy-bayes", version, about = "Bayesian inversion studies for periodic Darcy flow")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML with dotted keys).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seeds.base`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Draw prior samples and report per-mode empirical variances.
    SamplePrior(Common),
    /// Solve the forward problem for `problem.u`.
    Solve(Common),
    /// Synthesise observations from `truth.u`.
    GenerateData(Common),
    /// Sample the truncated posterior with pCN.
    RunMcmc(Common),
    /// Weak error of truncated posterior pressure moments.
    WeakError(Common),
    /// Hellinger distance between posteriors under perturbed data.
    Hellinger(Common),
    /// Dirichlet kernel identities and truncation rates.
    KernelChecks(Common),
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::config(THREADS_ENV, format!("`{value}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::plain(ErrorKind::Config, e.to_string()))
}

fn execute(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let (cmd, common) = match cli.command {
        Sub::SamplePrior(c) => (Command::SamplePrior, c),
        Sub::Solve(c) => (Command::Solve, c),
        Sub::GenerateData(c) => (Command::GenerateData, c),
        Sub::RunMcmc(c) => (Command::RunMcmc, c),
        Sub::WeakError(c) => (Command::WeakError, c),
        Sub::Hellinger(c) => (Command::Hellinger, c),
        Sub::KernelChecks(c) => (Command::KernelChecks, c),
    };
    let mut cfg = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seeds.base = seed;
    }
    let mut out = Output::create(&cfg.output_dir(common.out.as_deref()))?;
    run(cmd, &cfg, &mut out)?;
    out.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
