//! Episode configuration.
//!
//! [`TableParams`] is the user-facing form, written in the units the
//! experiment tables use (MB, dBm, dB, GHz, MJ). [`EpisodeConfig`] is the
//! SI form the simulator runs on; [`TableParams::to_episode_config`] is the
//! only place conversions happen.

use serde::{Deserialize, Serialize};

use crate::env::EnvError;
use crate::physics::{CostWeights, EnergyParams, RadioParams, UnitProfile};
use crate::scheduler::ServerConfig;

/// Closed interval `[min, max]` used for uniform sampling and min-max
/// normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn point(value: f64) -> Self {
        Self { min: value, max: value }
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    /// Maps `value` into `[0, 1]`; a degenerate range maps everything to 0.
    pub fn normalize(&self, value: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            0.0
        } else {
            ((value - self.min) / span).clamp(0.0, 1.0)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Range {
        Range::new(f(self.min), f(self.max))
    }
}

impl From<[f64; 2]> for Range {
    fn from(v: [f64; 2]) -> Self {
        Range::new(v[0], v[1])
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.min, r.max]
    }
}

/// Which device quantity fills the power slot of the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerStateSource {
    /// The device's maximum transmit power.
    #[default]
    MaxPower,
    /// The device's maximum CPU frequency, duplicating the resource slot.
    MaxFrequency,
}

/// Per-episode sampling ranges in SI units. Gains and powers are sampled
/// uniformly in their logarithmic units and then converted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges {
    pub task_size_bits: Range,
    pub cycles_per_bit: Range,
    pub deadline_s: Range,
    pub gain_db: Range,
    /// Range of each device's maximum transmit power, dBm.
    pub max_power_dbm: Range,
    /// Shared minimum transmit power, dBm.
    pub min_power_dbm: f64,
    pub max_freq_hz: Range,
    pub min_freq_hz: f64,
    /// Range of each device's battery capacity, J.
    pub max_battery_j: Range,
    /// Shared low-battery threshold, J.
    pub min_battery_j: f64,
    /// When set, every device's capacity is `min_battery_j + headroom`
    /// instead of being sampled.
    pub battery_headroom_j: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub devices: usize,
    pub steps: usize,
    /// Length of one time step; unfinished tasks are discarded at this bound.
    pub tau_max_s: f64,
    pub radio: RadioParams,
    pub server: ServerConfig,
    pub energy: EnergyParams,
    pub weights: CostWeights,
    pub sampling: SamplingRanges,
    pub power_state: PowerStateSource,
    /// Charge upload energy to tasks dropped by a drop-on-reject admission rule.
    pub charge_dropped_transmit_energy: bool,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::Config(msg));
        if self.devices == 0 {
            return bad("at least one device is required".into());
        }
        if self.steps == 0 {
            return bad("episodes need at least one step".into());
        }
        self.radio.validate()?;
        self.server.validate()?;
        self.energy.validate()?;
        self.weights.validate()?;
        let s = &self.sampling;
        for (name, r) in [
            ("task size", s.task_size_bits),
            ("cycles per bit", s.cycles_per_bit),
            ("deadline", s.deadline_s),
            ("gain", s.gain_db),
            ("max power", s.max_power_dbm),
            ("max frequency", s.max_freq_hz),
            ("battery capacity", s.max_battery_j),
        ] {
            if !r.is_valid() {
                return bad(format!("{name} range [{}, {}] is invalid", r.min, r.max));
            }
        }
        if s.task_size_bits.min <= 0.0 || s.cycles_per_bit.min <= 0.0 || s.deadline_s.min <= 0.0 {
            return bad("task size, cycles per bit and deadline must be positive".into());
        }
        if !(self.tau_max_s >= s.deadline_s.max) {
            return bad(format!(
                "tau_max {} is shorter than the longest deadline {}",
                self.tau_max_s, s.deadline_s.max
            ));
        }
        if s.min_power_dbm > s.max_power_dbm.min {
            return bad("minimum power exceeds the smallest maximum power".into());
        }
        if !(s.min_freq_hz > 0.0) || s.min_freq_hz > s.max_freq_hz.min {
            return bad("minimum frequency must be positive and below every maximum".into());
        }
        if s.min_battery_j < 0.0 {
            return bad("battery threshold must be non-negative".into());
        }
        match s.battery_headroom_j {
            Some(h) if !(h >= 0.0) => return bad("battery headroom must be non-negative".into()),
            None if s.min_battery_j > s.max_battery_j.min => {
                return bad("battery threshold exceeds the smallest capacity".into())
            }
            _ => {}
        }
        Ok(())
    }

    /// Largest battery capacity any device can have; normalizes the battery slot.
    pub fn battery_ceiling_j(&self) -> f64 {
        match self.sampling.battery_headroom_j {
            Some(h) => self.sampling.min_battery_j + h,
            None => self.sampling.max_battery_j.max,
        }
    }
}

/// Experiment parameters in table units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableParams {
    pub devices: usize,
    pub steps: usize,
    pub subchannels: usize,
    pub bandwidth_mhz: f64,
    pub tau_max_s: f64,
    pub task_size_mb: Range,
    pub cycles_per_bit: Range,
    pub deadline_s: Range,
    pub gain_db: Range,
    pub power_max_dbm: f64,
    pub power_min_dbm: f64,
    pub freq_max_ghz: f64,
    pub freq_min_ghz: f64,
    pub battery_max_mj: f64,
    pub battery_min_mj: f64,
    /// Overrides every capacity with `battery_min + headroom` (in J).
    pub battery_headroom_j: Option<f64>,
    pub server_freq_ghz: f64,
    pub server_storage_mb: f64,
    pub server_units: usize,
    pub kappa: f64,
    pub harvest_j: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub power_state: PowerStateSource,
    pub charge_dropped_transmit_energy: bool,
    pub units: UnitProfile,
}

impl Default for TableParams {
    fn default() -> Self {
        Self {
            devices: 50,
            steps: 10,
            subchannels: 10,
            bandwidth_mhz: 40.0,
            tau_max_s: 1.0,
            task_size_mb: Range::new(1.0, 50.0),
            cycles_per_bit: Range::new(300.0, 737.5),
            deadline_s: Range::new(0.1, 0.9),
            gain_db: Range::new(5.0, 14.0),
            power_max_dbm: 24.0,
            power_min_dbm: 1.0,
            freq_max_ghz: 1.5,
            freq_min_ghz: 0.4,
            battery_max_mj: 3.2,
            battery_min_mj: 0.5,
            battery_headroom_j: None,
            server_freq_ghz: 4.0,
            server_storage_mb: 400.0,
            server_units: 8,
            kappa: 5e-27,
            harvest_j: 0.001,
            lambda1: 0.5,
            lambda2: 0.5,
            power_state: PowerStateSource::MaxPower,
            charge_dropped_transmit_energy: false,
            units: UnitProfile::default(),
        }
    }
}

impl TableParams {
    /// Reduced setting used for quick experiments and the acceptance suite.
    pub fn desk() -> Self {
        Self {
            devices: 5,
            subchannels: 2,
            server_units: 2,
            ..Self::default()
        }
    }

    pub fn to_episode_config(&self) -> Result<EpisodeConfig, EnvError> {
        let u = &self.units;
        u.validate()?;
        let cfg = EpisodeConfig {
            devices: self.devices,
            steps: self.steps,
            tau_max_s: self.tau_max_s,
            radio: RadioParams {
                bandwidth_hz: self.bandwidth_mhz * 1.0e6,
                subchannels: self.subchannels,
            },
            server: ServerConfig {
                units: self.server_units,
                unit_speed_hz: u.gigahertz_to_hertz(self.server_freq_ghz),
                storage_bits: u.megabytes_to_bits(self.server_storage_mb),
            },
            energy: EnergyParams {
                kappa: self.kappa,
                harvest_joules: self.harvest_j,
            },
            weights: CostWeights {
                latency: self.lambda1,
                energy: self.lambda2,
            },
            sampling: SamplingRanges {
                task_size_bits: self.task_size_mb.map(|mb| u.megabytes_to_bits(mb)),
                cycles_per_bit: self.cycles_per_bit,
                deadline_s: self.deadline_s,
                gain_db: self.gain_db,
                max_power_dbm: Range::new(self.power_min_dbm, self.power_max_dbm),
                min_power_dbm: self.power_min_dbm,
                max_freq_hz: Range::new(
                    u.gigahertz_to_hertz(self.freq_min_ghz),
                    u.gigahertz_to_hertz(self.freq_max_ghz),
                ),
                min_freq_hz: u.gigahertz_to_hertz(self.freq_min_ghz),
                max_battery_j: Range::new(
                    u.megajoules_to_joules(self.battery_min_mj),
                    u.megajoules_to_joules(self.battery_max_mj),
                ),
                min_battery_j: u.megajoules_to_joules(self.battery_min_mj),
                battery_headroom_j: self.battery_headroom_j,
            },
            power_state: self.power_state,
            charge_dropped_transmit_energy: self.charge_dropped_transmit_energy,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
