//! Cross-run statistics: per-episode mean and 95% Student-t interval.

use std::fs;
use std::path::{Path, PathBuf};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::HarnessError;
use crate::metrics::{read_metrics, MetricsRow, METRICS_FILE};
use crate::run::{RunMetadata, METADATA_FILE};

pub const METRIC_COLUMNS: [&str; 4] = [
    "mean_eval_reward",
    "pct_expired_tasks",
    "pct_battery_violations",
    "td_error",
];

/// Sample mean and half-width of the two-sided 95% t interval. A single
/// value has half-width 0.
pub fn mean_ci95(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Some((mean, t * (var / n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub runs: usize,
    /// `(mean, ci95 half-width)` per entry of [`METRIC_COLUMNS`].
    pub stats: Vec<Option<(f64, f64)>>,
}

fn column(row: &MetricsRow, c: usize) -> Option<f64> {
    match c {
        0 => Some(row.mean_eval_reward),
        1 => Some(row.pct_expired_tasks),
        2 => Some(row.pct_battery_violations),
        _ => row.td_error,
    }
}

/// Aggregates aligned metric rows of several runs, clipped to the shortest.
pub fn aggregate_rows(runs: &[Vec<MetricsRow>]) -> Result<Vec<AggregateRow>, HarnessError> {
    if runs.is_empty() {
        return Err(HarnessError::Incompatible("no runs given".into()));
    }
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let episode = runs[0][i].episode;
        if runs.iter().any(|r| r[i].episode != episode) {
            return Err(HarnessError::Incompatible(format!(
                "row {i} covers different episodes across runs"
            )));
        }
        let stats = (0..METRIC_COLUMNS.len())
            .map(|c| {
                let vals: Vec<f64> = runs.iter().filter_map(|r| column(&r[i], c)).collect();
                mean_ci95(&vals)
            })
            .collect();
        out.push(AggregateRow {
            episode,
            runs: runs.len(),
            stats,
        });
    }
    Ok(out)
}

fn comparable(meta: &RunMetadata) -> serde_json::Value {
    let mut c = meta.config.clone();
    c.seed = 0;
    c.budget_minutes = None;
    c.checkpoint_every = 0;
    c.dump_trajectories = false;
    serde_json::to_value(c).expect("config serializes")
}

pub fn load_run(dir: &Path) -> Result<(RunMetadata, Vec<MetricsRow>), HarnessError> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(HarnessError::io(format!("reading {}", meta_path.display())))?;
    let meta: RunMetadata =
        serde_json::from_str(&text).map_err(HarnessError::json(format!("parsing {}", meta_path.display())))?;
    Ok((meta, read_metrics(&dir.join(METRICS_FILE))?))
}

/// Reads run directories, checks they differ only in seed and run
/// bookkeeping, and aggregates them.
pub fn aggregate(dirs: &[PathBuf]) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut runs = Vec::with_capacity(dirs.len());
    let mut reference: Option<(serde_json::Value, &Path)> = None;
    for dir in dirs {
        let (meta, rows) = load_run(dir)?;
        let key = comparable(&meta);
        match &reference {
            None => reference = Some((key, dir)),
            Some((k, first)) if *k != key => {
                return Err(HarnessError::Incompatible(format!(
                    "{} and {} were run with different configurations",
                    first.display(),
                    dir.display()
                )));
            }
            Some(_) => {}
        }
        runs.push(rows);
    }
    aggregate_rows(&runs)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(format!("creating {}", path.display())))?;
    let mut header = vec!["episode".to_string(), "runs".to_string()];
    for c in METRIC_COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_ci95"));
    }
    let ctx = || format!("writing {}", path.display());
    w.write_record(&header).map_err(HarnessError::csv(ctx()))?;
    for r in rows {
        let mut rec = vec![r.episode.to_string(), r.runs.to_string()];
        for s in &r.stats {
            match s {
                Some((m, h)) => {
                    rec.push(m.to_string());
                    rec.push(h.to_string());
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec).map_err(HarnessError::csv(ctx()))?;
    }
    w.flush().map_err(HarnessError::io(ctx()))
}
