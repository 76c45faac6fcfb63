use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gnb::config::{parse_values, RunConfig, SweepAxis};
use gnb::harness;
use gnb::Error;

/// Graph neural bandit simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write traces and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of a hyperparameter axis (k, gamma, alpha, n_tilde).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Continue a run from a checkpoint file.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("GNB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("GNB_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn load(path: &PathBuf) -> Result<RunConfig, Error> {
    let cfg = RunConfig::load(path)?;
    harness::validate(&cfg)?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, Error> {
    configure_threads()?;
    match cli.command {
        Command::Run {
            config,
            seed_override,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed_override {
                cfg.seeds = vec![s];
            }
            let out = harness::output_dir(&cfg, out);
            let summary = harness::run(&cfg, &out)?;
            for (t, (m, s)) in summary.checkpoints.iter().zip(&summary.stats) {
                println!("round {t}: cumulative regret {m:.3} ± {s:.3}");
            }
            for (seed, e) in &summary.failures {
                eprintln!("seed {seed} failed: {e}");
            }
            println!("outputs written to {}", out.display());
            Ok(summary.failures.is_empty())
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = load(&config)?;
            let axis = SweepAxis::parse(&axis)?;
            let values = parse_values(&values)?;
            let out = harness::output_dir(&cfg, out);
            let rows = harness::sweep(&cfg, axis, &values, &out)?;
            let mut ok = true;
            for r in &rows {
                println!(
                    "{} = {}: final regret {:.3} ± {:.3}",
                    axis.as_str(),
                    r.value,
                    r.summary.final_mean(),
                    r.summary.final_std()
                );
                ok &= r.summary.failures.is_empty();
            }
            Ok(ok)
        }
        Command::Validate { config } => {
            load(&config)?;
            println!("{}: ok", config.display());
            Ok(true)
        }
        Command::Resume { checkpoint, out } => {
            let run = harness::resume(&checkpoint, &out)?;
            let last = run.trace().last().map_or(0.0, |r| r.cum_regret);
            println!("seed {} finished at round {}: cumulative regret {last:.3}", run.seed, run.trace().len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) if e.is_config() => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
