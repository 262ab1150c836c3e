use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mec_harness::aggregate::{aggregate, write_aggregate};
use mec_harness::replay::replay_run;
use mec_harness::{run, HarnessError, RunConfig};
use mec_learn::Algorithm;

#[derive(Parser)]
#[command(name = "ccm-mec", version, about = "Train and evaluate MEC task-offloading learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm and write a run directory.
    Run {
        /// TOML run configuration; built-in desk settings when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        budget_minutes: Option<f64>,
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Per-episode mean and 95% interval across run directories.
    Aggregate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-score a run's trajectory dump and check its metrics.
    Replay { run: PathBuf },
}

fn execute(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run {
            config,
            algorithm,
            seed,
            out,
            episodes,
            budget_minutes,
            dump_trajectories,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::desk(),
            };
            if let Some(a) = algorithm {
                cfg.algorithm = a;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            if budget_minutes.is_some() {
                cfg.budget_minutes = budget_minutes;
            }
            cfg.dump_trajectories |= dump_trajectories;
            let summary = run(&cfg, &out)?;
            println!(
                "{} seed {}: {:?} after {}/{} episodes, final mean eval reward {}",
                summary.algorithm,
                summary.seed,
                summary.status,
                summary.episodes_completed,
                summary.episodes_requested,
                summary
                    .final_window_mean_eval_reward
                    .map_or("n/a".to_string(), |r| format!("{r:.4}")),
            );
            Ok(summary.status.exit_code())
        }
        Command::Aggregate { runs, out } => {
            let rows = aggregate(&runs)?;
            write_aggregate(&out, &rows)?;
            println!(
                "{} episodes across {} runs -> {}",
                rows.len(),
                runs.len(),
                out.display()
            );
            Ok(0)
        }
        Command::Replay { run } => {
            let report = replay_run(&run)?;
            for m in report.mismatches.iter().take(20) {
                eprintln!("{m}");
            }
            println!(
                "{} steps over {} episodes re-scored, {} mismatches",
                report.steps,
                report.episodes,
                report.mismatches.len()
            );
            Ok(if report.is_clean() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
