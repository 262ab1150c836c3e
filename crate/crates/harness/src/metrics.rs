use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const EVAL_FILE: &str = "eval_rewards.csv";

/// One training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    /// Mean over evaluation episodes of the summed step rewards.
    pub mean_eval_reward: f64,
    pub pct_expired_tasks: f64,
    pub pct_battery_violations: f64,
    /// Empty until the replay memory first holds a minibatch.
    pub td_error: Option<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub episode: usize,
    pub wall_time_s: f64,
}

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub episode: usize,
    pub eval_index: usize,
    pub eval_seed: u64,
    pub reward: f64,
    pub expired_tasks: usize,
    pub battery_violators: usize,
}

/// Aggregated evaluation of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub mean_reward: f64,
    pub pct_expired: f64,
    pub pct_battery: f64,
}

impl EvalSummary {
    pub fn from_rows(rows: Vec<EvalRow>, devices: usize, steps: usize) -> Self {
        let n = rows.len() as f64;
        let mean_reward = rows.iter().map(|r| r.reward).sum::<f64>() / n;
        let expired: usize = rows.iter().map(|r| r.expired_tasks).sum();
        let violators: usize = rows.iter().map(|r| r.battery_violators).sum();
        Self {
            pct_expired: pct(expired, devices * steps * rows.len()),
            pct_battery: pct(violators, devices * rows.len()),
            mean_reward,
            rows,
        }
    }
}

pub fn pct(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

/// CSV file that is flushed after every row, so an interrupted run
/// leaves a readable prefix.
pub struct AppendCsv {
    writer: csv::Writer<BufWriter<File>>,
    name: String,
}

impl AppendCsv {
    pub fn create(dir: &Path, name: &str) -> Result<Self, HarnessError> {
        let path = dir.join(name);
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)
            .map_err(HarnessError::io(format!("creating {}", path.display())))?;
        Ok(Self {
            writer: csv::Writer::from_writer(BufWriter::new(file)),
            name: name.to_string(),
        })
    }

    pub fn append<T: Serialize>(&mut self, row: &T) -> Result<(), HarnessError> {
        self.writer
            .serialize(row)
            .map_err(HarnessError::csv(format!("writing {}", self.name)))?;
        self.writer
            .flush()
            .map_err(HarnessError::io(format!("flushing {}", self.name)))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(HarnessError::csv(format!("opening {}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(HarnessError::csv(format!("reading {}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(HarnessError::io(format!("creating {}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(HarnessError::json(format!("writing {}", path.display())))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(HarnessError::io(format!("writing {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentages_use_device_step_and_episode_counts() {
        let rows = vec![
            EvalRow {
                episode: 0,
                eval_index: 0,
                eval_seed: 0,
                reward: -2.0,
                expired_tasks: 3,
                battery_violators: 1,
            },
            EvalRow {
                episode: 0,
                eval_index: 1,
                eval_seed: 1,
                reward: -4.0,
                expired_tasks: 1,
                battery_violators: 0,
            },
        ];
        let s = EvalSummary::from_rows(rows, 2, 5);
        assert_eq!(s.mean_reward, -3.0);
        assert_eq!(s.pct_expired, 20.0);
        assert_eq!(s.pct_battery, 25.0);
    }

    #[test]
    fn missing_td_error_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = AppendCsv::create(dir.path(), METRICS_FILE).unwrap();
        let rows = vec![
            MetricsRow {
                episode: 0,
                mean_eval_reward: -1.5,
                pct_expired_tasks: 10.0,
                pct_battery_violations: 0.0,
                td_error: None,
                epsilon: 1.0,
            },
            MetricsRow {
                episode: 1,
                mean_eval_reward: -1.25,
                pct_expired_tasks: 0.0,
                pct_battery_violations: 0.0,
                td_error: Some(0.5),
                epsilon: 0.99,
            },
        ];
        for r in &rows {
            w.append(r).unwrap();
        }
        drop(w);
        let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert!(
            text.starts_with("episode,mean_eval_reward,pct_expired_tasks,pct_battery_violations,td_error,epsilon\n")
        );
        assert_eq!(read_metrics(&dir.path().join(METRICS_FILE)).unwrap(), rows);
    }
}
