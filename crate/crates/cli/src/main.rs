use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmaxent_cli::commands::{self, RunOptions};
use qmaxent_cli::{CliError, ExperimentConfig};

/// Quantum maximum-entropy solvers: seeded solves, diagnostics and the
/// benchmark table. Log verbosity is read from MAXENT_LOG (off, info, debug).
#[derive(Parser)]
#[command(name = "qmaxent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every instance with every method and write traces.
    Solve(Common),
    /// Check the convergence theory at the optimum of every instance.
    Diagnose(Common),
    /// Solve and tabulate steps to precision (defaults to the nine-cell grid).
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; a built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of cells solved in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    /// Gap at which steps are counted.
    #[arg(long)]
    precision: Option<f64>,
}

impl Common {
    fn resolve(&self, default: fn() -> ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(p) = self.precision {
            cfg.precision = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions { jobs: self.jobs }
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.resolve(ExperimentConfig::solve_default)?;
            let summary = commands::solve(&cfg, &args.options())?;
            print!("{}", summary.render());
            Ok(summary.flagged())
        }
        Command::Bench(args) => {
            let cfg = args.resolve(ExperimentConfig::bench_default)?;
            let (summary, table) = commands::bench(&cfg, &args.options())?;
            print!("{}", table.render_markdown());
            Ok(summary.flagged() || table.flagged())
        }
        Command::Diagnose(args) => {
            let cfg = args.resolve(ExperimentConfig::diagnose_default)?;
            let rows = commands::diagnose(&cfg, &args.options())?;
            print!("{}", commands::render_diagnostics(&rows));
            Ok(rows.iter().any(|r| r.flagged()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAXENT_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
