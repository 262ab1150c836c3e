//! Closed-form system-model formulas.
//!
//! Every quantity here is SI: bits, cycles per bit, Hz, seconds, Watts and
//! Joules. Table-style inputs (MB, dBm, dB, MJ, GHz) are converted once via
//! [`UnitProfile`] before they reach these functions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Domain violations raised by the physics formulas.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("{quantity} must be strictly positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error("{quantity} must be non-negative, got {value}")]
    Negative { quantity: &'static str, value: f64 },
    #[error("system reward needs at least one device")]
    NoDevices,
    #[error("cost and penalty lists differ in length ({costs} vs {penalties})")]
    LengthMismatch { costs: usize, penalties: usize },
}

fn positive(quantity: &'static str, value: f64) -> Result<f64, PhysicsError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(PhysicsError::NonPositive { quantity, value })
    }
}

/// Conversion factors from the table units to SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnitProfile {
    /// Bits in one megabyte of task payload (decimal MB, 8 bits per byte).
    pub bits_per_megabyte: f64,
    /// Joules in one megajoule of battery capacity.
    pub joules_per_megajoule: f64,
}

impl Default for UnitProfile {
    fn default() -> Self {
        Self {
            bits_per_megabyte: 8.0e6,
            joules_per_megajoule: 1.0e6,
        }
    }
}

impl UnitProfile {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        positive("bits_per_megabyte", self.bits_per_megabyte)?;
        positive("joules_per_megajoule", self.joules_per_megajoule)?;
        Ok(())
    }

    pub fn megabytes_to_bits(&self, mb: f64) -> f64 {
        mb * self.bits_per_megabyte
    }

    pub fn bits_to_megabytes(&self, bits: f64) -> f64 {
        bits / self.bits_per_megabyte
    }

    pub fn megajoules_to_joules(&self, mj: f64) -> f64 {
        mj * self.joules_per_megajoule
    }

    pub fn gigahertz_to_hertz(&self, ghz: f64) -> f64 {
        ghz * 1.0e9
    }

    pub fn dbm_to_watts(&self, dbm: f64) -> f64 {
        dbm_to_watts(dbm)
    }

    pub fn db_to_linear(&self, db: f64) -> f64 {
        db_to_linear(db)
    }
}

/// Uplink bandwidth shared equally by `subchannels` slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub bandwidth_hz: f64,
    pub subchannels: usize,
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        positive("bandwidth", self.bandwidth_hz)?;
        if self.subchannels == 0 {
            return Err(PhysicsError::NonPositive {
                quantity: "subchannels",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// CPU energy coefficient κ.
    pub kappa: f64,
    /// Energy harvested by every device at the start of each step, J.
    pub harvest_joules: f64,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        positive("kappa", self.kappa)?;
        if !(self.harvest_joules >= 0.0) {
            return Err(PhysicsError::Negative {
                quantity: "harvest",
                value: self.harvest_joules,
            });
        }
        Ok(())
    }
}

/// Latency and energy weights of the per-task cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub latency: f64,
    pub energy: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            latency: 0.5,
            energy: 0.5,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (quantity, value) in [("latency weight", self.latency), ("energy weight", self.energy)] {
            if !(value >= 0.0) {
                return Err(PhysicsError::Negative { quantity, value });
            }
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Time to run `size_bits · cycles_per_bit` cycles on the device CPU at `freq_hz`.
pub fn local_latency(size_bits: f64, cycles_per_bit: f64, freq_hz: f64) -> Result<f64, PhysicsError> {
    positive("local frequency", freq_hz)?;
    Ok(size_bits * cycles_per_bit / freq_hz)
}

/// Dynamic CPU energy `κ · z · c · f²`.
pub fn local_energy(size_bits: f64, cycles_per_bit: f64, freq_hz: f64, kappa: f64) -> f64 {
    kappa * size_bits * cycles_per_bit * freq_hz * freq_hz
}

/// Shannon rate of one sub-channel: `(W/K) · log2(1 + p·g)`.
pub fn channel_rate(radio: &RadioParams, power_w: f64, gain: f64) -> Result<f64, PhysicsError> {
    let snr = power_w * gain;
    if !(snr >= 0.0) {
        return Err(PhysicsError::Negative {
            quantity: "signal-to-noise ratio",
            value: snr,
        });
    }
    Ok(radio.bandwidth_hz / radio.subchannels as f64 * (1.0 + snr).log2())
}

/// Transmission time `z / d`. A zero rate with a non-empty payload yields
/// `+∞`: the task cannot be sent.
pub fn offload_time(size_bits: f64, rate_bps: f64) -> f64 {
    if size_bits == 0.0 {
        0.0
    } else if rate_bps <= 0.0 {
        f64::INFINITY
    } else {
        size_bits / rate_bps
    }
}

pub fn offload_energy(power_w: f64, offload_s: f64) -> f64 {
    if power_w == 0.0 || offload_s == 0.0 {
        0.0
    } else {
        power_w * offload_s
    }
}

/// Processing time on one server unit running at `server_hz`.
pub fn server_service_time(size_bits: f64, cycles_per_bit: f64, server_hz: f64) -> Result<f64, PhysicsError> {
    positive("server frequency", server_hz)?;
    Ok(size_bits * cycles_per_bit / server_hz)
}

/// Weighted task cost `λ1·T + λ2·E`.
pub fn task_cost(latency_s: f64, energy_j: f64, weights: &CostWeights) -> f64 {
    weights.latency * latency_s + weights.energy * energy_j
}

/// Constraint penalty, never positive. It is zero exactly when the task met
/// its deadline and the battery stays at or above `battery_min`.
///
/// Callers cap `latency_s` at the step length before calling; an infinite
/// latency would make the deadline term unbounded.
pub fn task_penalty(latency_s: f64, deadline_s: f64, battery_j: f64, battery_min_j: f64, weights: &CostWeights) -> f64 {
    weights.latency * (deadline_s - latency_s).min(0.0) + weights.energy * (battery_j - battery_min_j).min(0.0)
}

/// Shared reward `−mean(L_n − L'_n)`.
pub fn system_reward(costs: &[f64], penalties: &[f64]) -> Result<f64, PhysicsError> {
    if costs.len() != penalties.len() {
        return Err(PhysicsError::LengthMismatch {
            costs: costs.len(),
            penalties: penalties.len(),
        });
    }
    if costs.is_empty() {
        return Err(PhysicsError::NoDevices);
    }
    let total: f64 = costs.iter().zip(penalties).map(|(l, p)| l - p).sum();
    Ok(-total / costs.len() as f64)
}

/// Battery after one step, clamped to `[0, capacity]`.
pub fn battery_step(battery_j: f64, consumed_j: f64, harvested_j: f64, capacity_j: f64) -> f64 {
    (battery_j - consumed_j + harvested_j).max(0.0).min(capacity_j)
}

/// Exponentially decaying exploration rate.
pub fn epsilon_schedule(episode: usize, max_episodes: usize, eps_min: f64, eps_max: f64) -> f64 {
    let max_episodes = max_episodes.max(1) as f64;
    eps_min + (eps_max - eps_min) * (-(episode as f64) / max_episodes).exp()
}
