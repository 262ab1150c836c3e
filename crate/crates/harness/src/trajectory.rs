//! Per-step evaluation dumps and their independent re-scoring.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mec_core::physics;
use mec_core::{
    schedule_step, DecodedAction, DeviceProfile, EpisodeConfig, Placement, RejectFate, ServerJob, TaskOutcome, TaskSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";

/// Everything needed to recompute one evaluation step from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub eval_index: usize,
    pub step: usize,
    pub tasks: Vec<TaskSpec>,
    pub devices: Vec<DeviceProfile>,
    pub batteries_before: Vec<f64>,
    pub actions: Vec<DecodedAction>,
    pub accept: Vec<bool>,
    pub reject_fate: RejectFate,
    pub outcomes: Vec<TaskOutcome>,
    pub reward: f64,
}

pub struct TrajectoryWriter {
    out: BufWriter<File>,
}

impl TrajectoryWriter {
    pub fn create(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(TRAJECTORY_FILE);
        let file = File::create(&path).map_err(HarnessError::io(format!("creating {}", path.display())))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &StepRecord) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut self.out, record).map_err(HarnessError::json("writing trajectory"))?;
        self.out
            .write_all(b"\n")
            .map_err(HarnessError::io("writing trajectory"))
    }

    /// Called once per training episode so a crash keeps whole episodes.
    pub fn flush(&mut self) -> Result<(), HarnessError> {
        self.out.flush().map_err(HarnessError::io("flushing trajectory"))
    }
}

pub fn read_records(path: &Path) -> Result<Vec<StepRecord>, HarnessError> {
    let file = File::open(path).map_err(HarnessError::io(format!("opening {}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(HarnessError::io(format!("reading {}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(HarnessError::json(format!(
            "{} line {}",
            path.display(),
            i + 1
        )))?);
    }
    Ok(out)
}

/// Outcome of recomputing one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescore {
    pub outcomes: Vec<TaskOutcome>,
    pub reward: f64,
}

/// Recomputes latencies, energies, batteries, cost, penalty and reward of a
/// record from its tasks, devices and actions alone.
pub fn rescore(cfg: &EpisodeConfig, rec: &StepRecord) -> Result<Rescore, HarnessError> {
    let n_dev = rec.tasks.len();
    let tau_max = cfg.tau_max_s;
    let mut latency = vec![0.0; n_dev];
    let mut energy = vec![0.0; n_dev];
    let mut placement = vec![Placement::Local; n_dev];
    let mut jobs = Vec::new();
    for n in 0..n_dev {
        let task = &rec.tasks[n];
        let a = &rec.actions[n];
        let rate =
            physics::channel_rate(&cfg.radio, a.power_w, rec.devices[n].gain).map_err(mec_core::EnvError::from)?;
        let t_off = physics::offload_time(task.size_bits, rate);
        if rec.accept[n] {
            placement[n] = Placement::Offloaded;
            let service = physics::server_service_time(task.size_bits, task.cycles_per_bit, cfg.server.unit_speed_hz)
                .map_err(mec_core::EnvError::from)?;
            jobs.push(ServerJob::new(n, t_off, service));
            energy[n] = physics::offload_energy(a.power_w, t_off);
        } else if a.propose && rec.reject_fate == RejectFate::Drop {
            placement[n] = Placement::Dropped;
            latency[n] = tau_max;
            if cfg.charge_dropped_transmit_energy {
                energy[n] = physics::offload_energy(a.power_w, t_off);
            }
        } else {
            latency[n] = physics::local_latency(task.size_bits, task.cycles_per_bit, a.freq_hz)
                .map_err(mec_core::EnvError::from)?;
            energy[n] = physics::local_energy(task.size_bits, task.cycles_per_bit, a.freq_hz, cfg.energy.kappa);
        }
    }
    for entry in schedule_step(&jobs, &cfg.server) {
        latency[entry.task_id] = entry.t_mec();
    }
    let mut outcomes = Vec::with_capacity(n_dev);
    for n in 0..n_dev {
        let d = &rec.devices[n];
        let charged = latency[n].min(tau_max);
        let battery = physics::battery_step(
            rec.batteries_before[n],
            energy[n],
            cfg.energy.harvest_joules,
            d.battery_max_j,
        );
        outcomes.push(TaskOutcome {
            placement: placement[n],
            latency_s: latency[n],
            charged_latency_s: charged,
            energy_j: energy[n],
            cost: physics::task_cost(charged, energy[n], &cfg.weights),
            penalty: physics::task_penalty(charged, rec.tasks[n].deadline_s, battery, d.battery_min_j, &cfg.weights),
            expired: latency[n] > rec.tasks[n].deadline_s,
            battery_after_j: battery,
        });
    }
    let costs: Vec<f64> = outcomes.iter().map(|o| o.cost).collect();
    let penalties: Vec<f64> = outcomes.iter().map(|o| o.penalty).collect();
    let reward = physics::system_reward(&costs, &penalties).map_err(mec_core::EnvError::from)?;
    Ok(Rescore { outcomes, reward })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Differences between a record and its re-scoring, as readable messages.
pub fn discrepancies(rec: &StepRecord, fresh: &Rescore, rel: f64) -> Vec<String> {
    let mut out = Vec::new();
    let tag = format!("episode {} eval {} step {}", rec.episode, rec.eval_index, rec.step);
    if !close(rec.reward, fresh.reward, rel) {
        out.push(format!("{tag}: reward {} vs {}", rec.reward, fresh.reward));
    }
    for (n, (a, b)) in rec.outcomes.iter().zip(&fresh.outcomes).enumerate() {
        let fields = [
            ("latency", a.latency_s, b.latency_s),
            ("energy", a.energy_j, b.energy_j),
            ("cost", a.cost, b.cost),
            ("penalty", a.penalty, b.penalty),
            ("battery", a.battery_after_j, b.battery_after_j),
        ];
        for (name, x, y) in fields {
            if !close(x, y, rel) {
                out.push(format!("{tag} device {n}: {name} {x} vs {y}"));
            }
        }
        if a.placement != b.placement || a.expired != b.expired {
            out.push(format!("{tag} device {n}: placement/expiry differ"));
        }
    }
    out
}
