//! Runs competitive-ratio experiments from TOML configs.
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 for runtime
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prophet_lcb::harness::{
    run_experiment, sweep, write_aggregate_csv, ExperimentConfig, ExperimentReport, RunOptions, SweepConfig,
};
use prophet_lcb::Error;

#[derive(Parser)]
#[command(name = "prophet-bench", version, about = "Prophet-inequality stopping policy benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Write per-episode decision traces under `<out>/traces`.
        #[arg(long)]
        trace: bool,
    },
    /// Run a batch of experiments.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        trace: bool,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn options(out: &Path, parallelism: usize, trace: bool) -> RunOptions {
    RunOptions {
        parallelism,
        trace_dir: trace.then(|| out.join("traces")),
    }
}

fn print_report(report: &ExperimentReport) {
    println!(
        "{}: n = {}, d = {}, sigma = {}, runs = {}",
        report.config.name(),
        report.config.n,
        report.config.dim(),
        report.config.sigma,
        report.config.runs
    );
    for a in &report.algorithms {
        println!(
            "  {:<20} ratio {:.4}  [{:.4}, {:.4}]  payoff {:.4}  prophet {:.4}",
            a.algorithm, a.ratio, a.ci_lo, a.ci_hi, a.mean_payoff, a.mean_prophet
        );
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Validate { config } => {
            let text = std::fs::read_to_string(&config).map_err(|source| Error::Io {
                path: config.clone(),
                source,
            })?;
            // Sweep files hold an `experiments` array.
            if text.contains("[[experiments]]") {
                let batch = SweepConfig::load(&config)?;
                let experiments = batch.expand();
                for e in &experiments {
                    e.validate()?;
                }
                println!("{}: ok ({} experiments)", config.display(), experiments.len());
            } else {
                ExperimentConfig::load(&config)?.validate()?;
                println!("{}: ok", config.display());
            }
            Ok(())
        }
        Command::Run {
            config,
            seed,
            out,
            parallelism,
            trace,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = out.unwrap_or_else(|| cfg.output.clone());
            let report = run_experiment(&cfg, &options(&out, parallelism, trace))?;
            let (episodes, aggregate) = report.write_to_dir(&out)?;
            print_report(&report);
            println!("wrote {} and {}", episodes.display(), aggregate.display());
            Ok(())
        }
        Command::Sweep {
            config,
            seed,
            out,
            parallelism,
            trace,
        } => {
            let batch = SweepConfig::load(&config)?;
            let out = out.unwrap_or_else(|| batch.output.clone());
            let mut experiments = batch.expand();
            for e in &mut experiments {
                if let Some(seed) = seed {
                    e.seed = seed;
                }
                e.validate()?;
            }
            let mut rows = Vec::new();
            let mut first_error = None;
            for (cfg, result) in experiments.iter().zip(sweep(&experiments, &options(&out, parallelism, trace))) {
                match result {
                    Ok(report) => {
                        report.write_to_dir(&out)?;
                        print_report(&report);
                        rows.extend(report.algorithms);
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", cfg.name());
                        first_error.get_or_insert(e);
                    }
                }
            }
            let path = out.join(format!("{}_aggregate.csv", batch.name()));
            write_aggregate_csv(&rows, &path)?;
            println!("wrote {}", path.display());
            match first_error {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
    }
}
