use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use mec_core::physics::epsilon_schedule;
use mec_core::rng::{derive_seed, Stream};
use mec_core::{EpisodeConfig, MecEnv};
use mec_learn::{build_learner, Learner, Transition};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::metrics::{
    write_json, AppendCsv, EvalRow, EvalSummary, MetricsRow, TimingRow, EVAL_FILE, METRICS_FILE, TIMING_FILE,
};
use crate::trajectory::{StepRecord, TrajectoryWriter};

pub const SCHEMA_VERSION: u32 = 1;
pub const METADATA_FILE: &str = "metadata.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Stopped by the wall-clock budget; every written row is complete.
    Truncated,
    Diverged,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::Truncated => 3,
            RunStatus::Diverged => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub crate_version: String,
    pub config: RunConfig,
    /// How underspecified parts of the method were resolved.
    pub interpretations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub algorithm: String,
    pub seed: u64,
    pub status: RunStatus,
    pub episodes_requested: usize,
    pub episodes_completed: usize,
    pub training_calls: usize,
    pub elapsed_s: f64,
    /// Mean eval reward over the first and last (up to) 50 evaluated episodes.
    pub first_window_mean_eval_reward: Option<f64>,
    pub final_window_mean_eval_reward: Option<f64>,
    pub final_window_pct_expired_tasks: Option<f64>,
    pub final_window_pct_battery_violations: Option<f64>,
    pub diagnostic: Option<String>,
}

pub const SUMMARY_WINDOW: usize = 50;

fn interpretations() -> BTreeMap<String, String> {
    [
        (
            "master_exploration",
            "shuffle with probability epsilon, rank by Q otherwise; evaluation always ranks",
        ),
        (
            "admission_walk",
            "descending order, accept while under K and the size fits, skip misfits and continue",
        ),
        ("next_q", "online master picks the proposer, target master values it"),
        ("client_proposal_test", "offload component >= 0.5"),
        ("importance_weights", "master and critic loss only"),
        ("exploration_noise", "configurable, standard normal by default"),
        (
            "eval_reward",
            "sum of step rewards per evaluation episode, averaged over evaluation episodes",
        ),
        (
            "battery_violation_pct",
            "devices below threshold at any step of an evaluation episode",
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Plays the evaluation episodes of one training episode without
/// exploration.
pub fn evaluate(
    learner: &mut dyn Learner,
    cfg: &RunConfig,
    env_cfg: &EpisodeConfig,
    episode: usize,
    mut dump: Option<&mut TrajectoryWriter>,
) -> Result<EvalSummary, HarnessError> {
    let mut rows = Vec::with_capacity(cfg.eval_episodes);
    for k in 0..cfg.eval_episodes {
        let seed = cfg.eval_seed_base + k as u64;
        let (mut env, mut obs) = MecEnv::reset(env_cfg, seed)?;
        let mut reward = 0.0;
        let mut expired = 0;
        while !env.is_done() {
            let decision = learner.act(&env, &obs, 0.0, true)?;
            let before = dump
                .as_ref()
                .map(|_| (env.tasks().to_vec(), env.batteries().to_vec(), env.step_index()));
            let res = env.step(&decision.decoded, &decision.mask, learner.reject_fate())?;
            reward += res.outcome.reward;
            expired += res.outcome.count_expired;
            if let (Some(w), Some((tasks, batteries, step))) = (dump.as_deref_mut(), before) {
                w.write(&StepRecord {
                    episode,
                    eval_index: k,
                    step,
                    tasks,
                    devices: env.devices().to_vec(),
                    batteries_before: batteries,
                    actions: decision.decoded.clone(),
                    accept: decision.mask.accept.clone(),
                    reject_fate: learner.reject_fate(),
                    outcomes: res.outcome.tasks.clone(),
                    reward: res.outcome.reward,
                })?;
            }
            obs = res.observations;
        }
        rows.push(EvalRow {
            episode,
            eval_index: k,
            eval_seed: seed,
            reward,
            expired_tasks: expired,
            battery_violators: env.battery_violators(),
        });
    }
    Ok(EvalSummary::from_rows(rows, env_cfg.devices, env_cfg.steps))
}

/// One exploring episode whose transitions go to the learner's memory.
fn train_episode(
    learner: &mut dyn Learner,
    env_cfg: &EpisodeConfig,
    seed: u64,
    epsilon: f64,
) -> Result<(), HarnessError> {
    let (mut env, mut obs) = MecEnv::reset(env_cfg, seed)?;
    while !env.is_done() {
        let decision = learner.act(&env, &obs, epsilon, false)?;
        let res = env.step(&decision.decoded, &decision.mask, learner.reject_fate())?;
        learner.remember(Transition {
            states: obs,
            actions: decision.actions,
            accepted: decision.mask.accept,
            reward: res.outcome.reward,
            next_states: res.observations.clone(),
            done: res.done,
        })?;
        obs = res.observations;
    }
    Ok(())
}

/// Runs the train/evaluate loop and writes the run directory:
/// `metrics.csv`, `timing.csv`, `eval_rewards.csv`, `metadata.json`,
/// `summary.json`, plus `trajectories.jsonl` and `checkpoint.json` when
/// enabled.
///
/// Budget truncation returns `Ok` with [`RunStatus::Truncated`]. A
/// non-finite loss writes the summary and returns
/// [`HarnessError::Divergence`].
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary, HarnessError> {
    let env_cfg = cfg.validate()?;
    fs::create_dir_all(out).map_err(HarnessError::io(format!("creating {}", out.display())))?;
    write_json(
        &out.join(METADATA_FILE),
        &RunMetadata {
            schema_version: SCHEMA_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            interpretations: interpretations(),
        },
    )?;
    let mut metrics = AppendCsv::create(out, METRICS_FILE)?;
    let mut timing = AppendCsv::create(out, TIMING_FILE)?;
    let mut evals = AppendCsv::create(out, EVAL_FILE)?;
    let mut dump = if cfg.dump_trajectories {
        Some(TrajectoryWriter::create(out)?)
    } else {
        None
    };

    let mut learner = build_learner(cfg.algorithm, &cfg.learner, env_cfg.devices, cfg.seed)?;
    let started = Instant::now();
    let budget_s = cfg.budget_minutes.map(|m| m * 60.0);
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut status = RunStatus::Completed;
    let mut diagnostic = None;
    let mut completed = 0;
    let mut training_calls = 0;

    for episode in 0..cfg.episodes {
        let epsilon = epsilon_schedule(episode, cfg.epsilon_horizon(), cfg.epsilon_min, cfg.epsilon_max);
        let progress = if cfg.episodes > 1 {
            episode as f64 / (cfg.episodes - 1) as f64
        } else {
            1.0
        };
        let step = train_episode(
            learner.as_mut(),
            &env_cfg,
            derive_seed(cfg.seed, Stream::Environment, episode as u64),
            epsilon,
        )
        .and_then(|_| learner.train(progress).map_err(HarnessError::from));
        let report = match step {
            Ok(r) => r,
            Err(HarnessError::Learn(e)) if e.is_divergence() => {
                status = RunStatus::Diverged;
                diagnostic = Some(format!("episode {episode}: {e}"));
                write_summary(cfg, out, status, completed, training_calls, &rows, started, diagnostic)?;
                return Err(HarnessError::Divergence { episode, source: e });
            }
            Err(e) => return Err(e),
        };
        if report.is_some() {
            training_calls += 1;
        }

        if episode % cfg.eval_stride == 0 || episode + 1 == cfg.episodes {
            let summary = evaluate(learner.as_mut(), cfg, &env_cfg, episode, dump.as_mut())?;
            for r in &summary.rows {
                evals.append(r)?;
            }
            let row = MetricsRow {
                episode,
                mean_eval_reward: summary.mean_reward,
                pct_expired_tasks: summary.pct_expired,
                pct_battery_violations: summary.pct_battery,
                td_error: report.map(|r| r.td_error),
                epsilon,
            };
            metrics.append(&row)?;
            rows.push(row);
            if let Some(w) = dump.as_mut() {
                w.flush()?;
            }
        }
        timing.append(&TimingRow {
            episode,
            wall_time_s: started.elapsed().as_secs_f64(),
        })?;
        completed = episode + 1;

        if cfg.checkpoint_every > 0 && completed % cfg.checkpoint_every == 0 {
            learner.save(&out.join(CHECKPOINT_FILE))?;
        }
        if budget_s.is_some_and(|b| started.elapsed().as_secs_f64() >= b) && completed < cfg.episodes {
            status = RunStatus::Truncated;
            break;
        }
    }
    write_summary(cfg, out, status, completed, training_calls, &rows, started, diagnostic)
}

#[allow(clippy::too_many_arguments)]
fn write_summary(
    cfg: &RunConfig,
    out: &Path,
    status: RunStatus,
    completed: usize,
    training_calls: usize,
    rows: &[MetricsRow],
    started: Instant,
    diagnostic: Option<String>,
) -> Result<RunSummary, HarnessError> {
    let first = &rows[..rows.len().min(SUMMARY_WINDOW)];
    let last = &rows[rows.len().saturating_sub(SUMMARY_WINDOW)..];
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        algorithm: cfg.algorithm.to_string(),
        seed: cfg.seed,
        status,
        episodes_requested: cfg.episodes,
        episodes_completed: completed,
        training_calls,
        elapsed_s: started.elapsed().as_secs_f64(),
        first_window_mean_eval_reward: mean(first.iter().map(|r| r.mean_eval_reward)),
        final_window_mean_eval_reward: mean(last.iter().map(|r| r.mean_eval_reward)),
        final_window_pct_expired_tasks: mean(last.iter().map(|r| r.pct_expired_tasks)),
        final_window_pct_battery_violations: mean(last.iter().map(|r| r.pct_battery_violations)),
        diagnostic,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
