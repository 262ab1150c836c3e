//! Per-step FIFO scheduling of admitted tasks on the server's identical
//! processing units.
//!
//! Tasks reach the server when their upload finishes. They are served in
//! arrival order; each one takes the unit that frees up first and starts at
//! `max(arrival, unit free time)`. Nothing carries over between steps.

use serde::{Deserialize, Serialize};

use crate::physics::PhysicsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    /// Number of identical processing units.
    pub units: usize,
    /// Cycles per second of each unit.
    pub unit_speed_hz: f64,
    /// Storage available for offloaded payloads, bits.
    pub storage_bits: f64,
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.units == 0 {
            return Err(PhysicsError::NonPositive {
                quantity: "server units",
                value: 0.0,
            });
        }
        if !(self.unit_speed_hz > 0.0) {
            return Err(PhysicsError::NonPositive {
                quantity: "server unit speed",
                value: self.unit_speed_hz,
            });
        }
        if !(self.storage_bits > 0.0) {
            return Err(PhysicsError::NonPositive {
                quantity: "server storage",
                value: self.storage_bits,
            });
        }
        Ok(())
    }
}

/// A task handed to the scheduler: upload completion time and service time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerJob {
    pub task_id: usize,
    pub arrival: f64,
    pub service: f64,
}

impl ServerJob {
    pub fn new(task_id: usize, arrival: f64, service: f64) -> Self {
        Self {
            task_id,
            arrival,
            service,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmittedTask {
    pub task_id: usize,
    /// Upload completion time (T_off).
    pub arrival: f64,
    /// Processing time on one unit (T_ser).
    pub service: f64,
    /// Earliest availability of a unit when this task was dispatched (T_ear).
    pub earliest_unit_free: f64,
    pub unit: usize,
    pub start: f64,
    pub finish: f64,
}

impl AdmittedTask {
    /// Total server-side latency `T_ser + max(T_off, T_ear)`.
    pub fn t_mec(&self) -> f64 {
        debug_assert_eq!(self.finish, self.service + self.arrival.max(self.earliest_unit_free));
        self.finish
    }
}

/// Schedules one step's admitted tasks. The result is ordered by
/// `(arrival, task_id)`, the order in which tasks were dispatched.
pub fn schedule_step(jobs: &[ServerJob], cfg: &ServerConfig) -> Vec<AdmittedTask> {
    let mut order: Vec<ServerJob> = jobs.to_vec();
    order.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.task_id.cmp(&b.task_id)));

    let mut free_at = vec![0.0f64; cfg.units.max(1)];
    order
        .into_iter()
        .map(|job| {
            let (unit, &ready) = free_at
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .expect("at least one unit");
            let start = job.arrival.max(ready);
            let finish = start + job.service;
            free_at[unit] = finish;
            AdmittedTask {
                task_id: job.task_id,
                arrival: job.arrival,
                service: job.service,
                earliest_unit_free: ready,
                unit,
                start,
                finish,
            }
        })
        .collect()
}

/// Free-function form of [`AdmittedTask::t_mec`].
pub fn t_mec(entry: &AdmittedTask) -> f64 {
    entry.t_mec()
}
