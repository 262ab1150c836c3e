//! Episodic multi-device offloading environment.
//!
//! Each step every device holds one task. Devices either process locally or
//! propose the task for offloading; an admission decision (the master's
//! accept mask) picks which proposals get a sub-channel and server storage.
//! The step then computes latency, energy, cost, penalty and the shared
//! reward, advances batteries and draws the next tasks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EpisodeConfig, PowerStateSource, Range, SamplingRanges};
use crate::physics::{self, PhysicsError};
use crate::rng::{episode_rng, SimRng};
use crate::scheduler::{schedule_step, ServerJob};

/// Length of every per-device observation.
pub const OBS_DIM: usize = 7;
/// Length of every per-device action.
pub const ACTION_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("episode already finished; call reset")]
    EpisodeFinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    /// Normalized channel gain `h/σ²`, linear.
    pub gain: f64,
    pub power_min_w: f64,
    pub power_max_w: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub battery_min_j: f64,
    pub battery_max_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub size_bits: f64,
    pub cycles_per_bit: f64,
    pub deadline_s: f64,
}

pub type Observation = [f64; OBS_DIM];

/// Raw client output scaled into `[0, 1]`: offload score, power share and
/// frequency share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientAction {
    pub offload: f64,
    pub power: f64,
    pub freq: f64,
}

impl ClientAction {
    pub fn new(offload: f64, power: f64, freq: f64) -> Self {
        Self { offload, power, freq }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; ACTION_DIM] {
        [self.offload, self.power, self.freq]
    }

    pub fn proposes(&self) -> bool {
        self.offload >= 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedAction {
    pub propose: bool,
    pub power_w: f64,
    pub freq_hz: f64,
}

/// Binary accept mask over devices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MasterDecision {
    pub accept: Vec<bool>,
}

impl MasterDecision {
    pub fn none(devices: usize) -> Self {
        Self {
            accept: vec![false; devices],
        }
    }

    pub fn from_indices(devices: usize, accepted: &[usize]) -> Self {
        let mut d = Self::none(devices);
        for &n in accepted {
            d.accept[n] = true;
        }
        d
    }

    pub fn accepted(&self) -> impl Iterator<Item = usize> + '_ {
        self.accept.iter().enumerate().filter(|(_, &a)| a).map(|(n, _)| n)
    }

    pub fn count(&self) -> usize {
        self.accept.iter().filter(|&&a| a).count()
    }

    /// Checks the mask against the proposals, the sub-channel count and the
    /// server storage.
    pub fn check(
        &self,
        proposals: &[bool],
        sizes_bits: &[f64],
        subchannels: usize,
        storage_bits: f64,
    ) -> Result<(), EnvError> {
        if self.accept.len() != proposals.len() {
            return Err(EnvError::Contract(format!(
                "mask covers {} devices, expected {}",
                self.accept.len(),
                proposals.len()
            )));
        }
        if let Some(n) = self.accepted().find(|&n| !proposals[n]) {
            return Err(EnvError::Contract(format!("device {n} was accepted without proposing")));
        }
        let count = self.count();
        if count > subchannels {
            return Err(EnvError::Contract(format!(
                "{count} tasks accepted but only {subchannels} sub-channels exist"
            )));
        }
        let load: f64 = self.accepted().map(|n| sizes_bits[n]).sum();
        if load > storage_bits {
            return Err(EnvError::Contract(format!(
                "accepted payload {load} bits exceeds storage {storage_bits}"
            )));
        }
        Ok(())
    }
}

/// What happens to a proposal the admission step turned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectFate {
    #[default]
    Local,
    /// Discarded; the task is charged the full step length as its latency.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Local,
    Offloaded,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub placement: Placement,
    /// Nominal latency; may exceed the step length or be infinite.
    pub latency_s: f64,
    /// Latency used for cost and penalty, capped at the step length.
    pub charged_latency_s: f64,
    pub energy_j: f64,
    pub cost: f64,
    pub penalty: f64,
    pub expired: bool,
    pub battery_after_j: f64,
}

impl TaskOutcome {
    pub fn offloaded(&self) -> bool {
        self.placement == Placement::Offloaded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub tasks: Vec<TaskOutcome>,
    pub reward: f64,
    pub count_offloaded: usize,
    pub count_expired: usize,
    pub count_battery_violation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub outcome: StepOutcome,
    pub observations: Vec<Observation>,
    pub done: bool,
}

fn uniform(rng: &mut SimRng, range: Range) -> f64 {
    if range.min == range.max {
        range.min
    } else {
        range.min + (range.max - range.min) * rng.random::<f64>()
    }
}

/// Draws one task per device, each field uniform over its range.
pub fn generate_tasks(ranges: &SamplingRanges, devices: usize, rng: &mut SimRng) -> Vec<TaskSpec> {
    (0..devices)
        .map(|_| TaskSpec {
            size_bits: uniform(rng, ranges.task_size_bits),
            cycles_per_bit: uniform(rng, ranges.cycles_per_bit),
            deadline_s: uniform(rng, ranges.deadline_s),
        })
        .collect()
}

fn sample_devices(ranges: &SamplingRanges, devices: usize, rng: &mut SimRng) -> Vec<DeviceProfile> {
    (0..devices)
        .map(|_| {
            let gain = physics::db_to_linear(uniform(rng, ranges.gain_db));
            let power_max_w = physics::dbm_to_watts(uniform(rng, ranges.max_power_dbm));
            let freq_max_hz = uniform(rng, ranges.max_freq_hz);
            let sampled_battery = uniform(rng, ranges.max_battery_j);
            let battery_max_j = match ranges.battery_headroom_j {
                Some(h) => ranges.min_battery_j + h,
                None => sampled_battery,
            };
            DeviceProfile {
                gain,
                power_min_w: physics::dbm_to_watts(ranges.min_power_dbm),
                power_max_w,
                freq_min_hz: ranges.min_freq_hz,
                freq_max_hz,
                battery_min_j: ranges.min_battery_j,
                battery_max_j,
            }
        })
        .collect()
}

/// Turns scaled client actions into an offload proposal, a transmit power
/// and a CPU frequency, each within the device's budget.
pub fn decode_actions(raw: &[ClientAction], profiles: &[DeviceProfile]) -> Result<Vec<DecodedAction>, EnvError> {
    if raw.len() != profiles.len() {
        return Err(EnvError::Contract(format!(
            "{} actions for {} devices",
            raw.len(),
            profiles.len()
        )));
    }
    raw.iter()
        .zip(profiles)
        .enumerate()
        .map(|(n, (a, d))| {
            if !a.to_array().iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(EnvError::Contract(format!(
                    "action of device {n} outside [0, 1]: {a:?}"
                )));
            }
            Ok(DecodedAction {
                propose: a.proposes(),
                power_w: d.power_min_w.max(a.power * d.power_max_w).min(d.power_max_w),
                freq_hz: d.freq_min_hz.max(a.freq * d.freq_max_hz).min(d.freq_max_hz),
            })
        })
        .collect()
}

/// Normalization ranges of the seven observation slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationScale {
    pub slots: [Range; OBS_DIM],
}

impl ObservationScale {
    pub fn new(cfg: &EpisodeConfig) -> Self {
        let s = &cfg.sampling;
        let power = match cfg.power_state {
            PowerStateSource::MaxPower => s.max_power_dbm.map(physics::dbm_to_watts),
            PowerStateSource::MaxFrequency => s.max_freq_hz,
        };
        Self {
            slots: [
                s.task_size_bits,
                s.cycles_per_bit,
                s.deadline_s,
                s.gain_db.map(physics::db_to_linear),
                power,
                s.max_freq_hz,
                Range::new(0.0, cfg.battery_ceiling_j()),
            ],
        }
    }

    pub fn observe(&self, cfg: &EpisodeConfig, task: &TaskSpec, device: &DeviceProfile, battery_j: f64) -> Observation {
        let power = match cfg.power_state {
            PowerStateSource::MaxPower => device.power_max_w,
            PowerStateSource::MaxFrequency => device.freq_max_hz,
        };
        let raw = [
            task.size_bits,
            task.cycles_per_bit,
            task.deadline_s,
            device.gain,
            power,
            device.freq_max_hz,
            battery_j,
        ];
        let mut obs = [0.0; OBS_DIM];
        for (o, (v, r)) in obs.iter_mut().zip(raw.iter().zip(&self.slots)) {
            *o = r.normalize(*v);
        }
        obs
    }
}

/// One running episode.
#[derive(Debug, Clone)]
pub struct MecEnv {
    cfg: EpisodeConfig,
    scale: ObservationScale,
    rng: SimRng,
    devices: Vec<DeviceProfile>,
    batteries: Vec<f64>,
    tasks: Vec<TaskSpec>,
    below_threshold: Vec<bool>,
    step_index: usize,
    scheduler_calls: usize,
}

impl MecEnv {
    /// Starts an episode. Everything sampled (device budgets, gains, tasks)
    /// is a deterministic function of `(cfg, seed)`. Batteries start full.
    pub fn reset(cfg: &EpisodeConfig, seed: u64) -> Result<(Self, Vec<Observation>), EnvError> {
        cfg.validate()?;
        let mut rng = episode_rng(seed);
        let devices = sample_devices(&cfg.sampling, cfg.devices, &mut rng);
        let tasks = generate_tasks(&cfg.sampling, cfg.devices, &mut rng);
        let batteries = devices.iter().map(|d| d.battery_max_j).collect();
        let env = Self {
            scale: ObservationScale::new(cfg),
            cfg: cfg.clone(),
            rng,
            devices,
            batteries,
            tasks,
            below_threshold: vec![false; cfg.devices],
            step_index: 0,
            scheduler_calls: 0,
        };
        let obs = env.observations();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn devices(&self) -> &[DeviceProfile] {
        &self.devices
    }

    pub fn batteries(&self) -> &[f64] {
        &self.batteries
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn task_sizes(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.size_bits).collect()
    }

    /// Number of completed steps in this episode.
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.cfg.steps
    }

    /// How many times this episode invoked the server scheduler.
    pub fn scheduler_invocations(&self) -> usize {
        self.scheduler_calls
    }

    /// Devices whose battery fell below the threshold at any point so far.
    pub fn battery_violators(&self) -> usize {
        self.below_threshold.iter().filter(|&&b| b).count()
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.tasks
            .iter()
            .zip(&self.devices)
            .zip(&self.batteries)
            .map(|((t, d), &b)| self.scale.observe(&self.cfg, t, d, b))
            .collect()
    }

    /// Upload time device `n` would need for its current task at `power_w`.
    pub fn offload_time(&self, n: usize, power_w: f64) -> Result<f64, EnvError> {
        let rate = physics::channel_rate(&self.cfg.radio, power_w, self.devices[n].gain)?;
        Ok(physics::offload_time(self.tasks[n].size_bits, rate))
    }

    /// Applies decoded client actions and the admission mask.
    pub fn step(
        &mut self,
        actions: &[DecodedAction],
        decision: &MasterDecision,
        reject: RejectFate,
    ) -> Result<StepResult, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeFinished);
        }
        let n_dev = self.cfg.devices;
        if actions.len() != n_dev {
            return Err(EnvError::Contract(format!(
                "{} decoded actions for {n_dev} devices",
                actions.len()
            )));
        }
        for (n, a) in actions.iter().enumerate() {
            let d = &self.devices[n];
            if !(a.power_w >= d.power_min_w && a.power_w <= d.power_max_w)
                || !(a.freq_hz >= d.freq_min_hz && a.freq_hz <= d.freq_max_hz)
            {
                return Err(EnvError::Contract(format!(
                    "device {n} allocation outside its budget: {a:?}"
                )));
            }
        }
        let proposals: Vec<bool> = actions.iter().map(|a| a.propose).collect();
        decision.check(
            &proposals,
            &self.task_sizes(),
            self.cfg.radio.subchannels,
            self.cfg.server.storage_bits,
        )?;

        let cfg = &self.cfg;
        let tau_max = cfg.tau_max_s;
        let mut latency = vec![0.0; n_dev];
        let mut energy = vec![0.0; n_dev];
        let mut placement = vec![Placement::Local; n_dev];
        let mut jobs = Vec::new();

        for n in 0..n_dev {
            let task = &self.tasks[n];
            let a = &actions[n];
            let upload = || -> Result<(f64, f64), EnvError> {
                let rate = physics::channel_rate(&cfg.radio, a.power_w, self.devices[n].gain)?;
                let t_off = physics::offload_time(task.size_bits, rate);
                Ok((t_off, physics::offload_energy(a.power_w, t_off)))
            };
            if decision.accept[n] {
                placement[n] = Placement::Offloaded;
                let (t_off, e_off) = upload()?;
                let service =
                    physics::server_service_time(task.size_bits, task.cycles_per_bit, cfg.server.unit_speed_hz)?;
                jobs.push(ServerJob::new(n, t_off, service));
                energy[n] = e_off;
            } else if a.propose && reject == RejectFate::Drop {
                placement[n] = Placement::Dropped;
                latency[n] = tau_max;
                energy[n] = if cfg.charge_dropped_transmit_energy {
                    upload()?.1
                } else {
                    0.0
                };
            } else {
                latency[n] = physics::local_latency(task.size_bits, task.cycles_per_bit, a.freq_hz)?;
                energy[n] = physics::local_energy(task.size_bits, task.cycles_per_bit, a.freq_hz, cfg.energy.kappa);
            }
        }

        if !jobs.is_empty() {
            self.scheduler_calls += 1;
            for entry in schedule_step(&jobs, &cfg.server) {
                latency[entry.task_id] = entry.t_mec();
            }
        }

        let mut tasks = Vec::with_capacity(n_dev);
        for n in 0..n_dev {
            let device = &self.devices[n];
            let task = &self.tasks[n];
            let charged = latency[n].min(tau_max);
            let battery = physics::battery_step(
                self.batteries[n],
                energy[n],
                cfg.energy.harvest_joules,
                device.battery_max_j,
            );
            self.batteries[n] = battery;
            if battery < device.battery_min_j {
                self.below_threshold[n] = true;
            }
            tasks.push(TaskOutcome {
                placement: placement[n],
                latency_s: latency[n],
                charged_latency_s: charged,
                energy_j: energy[n],
                cost: physics::task_cost(charged, energy[n], &cfg.weights),
                penalty: physics::task_penalty(charged, task.deadline_s, battery, device.battery_min_j, &cfg.weights),
                expired: latency[n] > task.deadline_s,
                battery_after_j: battery,
            });
        }

        let costs: Vec<f64> = tasks.iter().map(|t| t.cost).collect();
        let penalties: Vec<f64> = tasks.iter().map(|t| t.penalty).collect();
        let reward = physics::system_reward(&costs, &penalties)?;
        let outcome = StepOutcome {
            reward,
            count_offloaded: tasks.iter().filter(|t| t.offloaded()).count(),
            count_expired: tasks.iter().filter(|t| t.expired).count(),
            count_battery_violation: tasks
                .iter()
                .zip(&self.devices)
                .filter(|(t, d)| t.battery_after_j < d.battery_min_j)
                .count(),
            tasks,
        };

        self.step_index += 1;
        self.tasks = generate_tasks(&self.cfg.sampling, n_dev, &mut self.rng);
        Ok(StepResult {
            outcome,
            observations: self.observations(),
            done: self.is_done(),
        })
    }
}
