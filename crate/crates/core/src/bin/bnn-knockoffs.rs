use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bnn_knockoffs::cli::{cmd_evaluate, cmd_filter, cmd_simulate, Config};
use bnn_knockoffs::Result;

#[derive(Parser, Debug)]
#[command(name = "bnn-knockoffs", version, about = "Knockoff feature selection with ARD Bayesian neural networks")]
struct Cli {
    /// Overrides the `seed` key of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the `output_dir` key of the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the simulation study.
    Simulate { config: PathBuf },
    /// Select features of a CSV dataset with the knockoff filter.
    Filter { data: PathBuf, config: PathBuf },
    /// Test RMSE of networks refitted on the selected features.
    Evaluate { data: PathBuf, config: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> Result<Config> {
    let mut cfg = Config::load(path)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.output_dir.is_some() {
        cfg.output_dir = cli.output_dir.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<PathBuf> {
    match &cli.command {
        Command::Simulate { config } => cmd_simulate(&load(config, cli)?),
        Command::Filter { data, config } => cmd_filter(data, &load(config, cli)?),
        Command::Evaluate { data, config } => cmd_evaluate(data, &load(config, cli)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(jobs);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };

    match pool.install(|| run(&cli)) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
