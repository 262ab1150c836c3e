use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::HarnessError;
use crate::metrics::{pct, read_metrics, METRICS_FILE};
use crate::run::{RunMetadata, METADATA_FILE};
use crate::trajectory::{discrepancies, read_records, rescore, TRAJECTORY_FILE};

/// Relative tolerance when comparing dumped and recomputed values.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    pub episodes: usize,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-scores every dumped evaluation step of a run directory through the
/// physics and scheduler, and recomputes each episode's expired-task
/// percentage against `metrics.csv`.
pub fn replay_run(dir: &Path) -> Result<ReplayReport, HarnessError> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(HarnessError::io(format!("reading {}", meta_path.display())))?;
    let meta: RunMetadata =
        serde_json::from_str(&text).map_err(HarnessError::json(format!("parsing {}", meta_path.display())))?;
    let env_cfg = meta.config.validate()?;
    let records = read_records(&dir.join(TRAJECTORY_FILE))?;

    let mut mismatches = Vec::new();
    let mut expired: BTreeMap<usize, usize> = BTreeMap::new();
    for rec in &records {
        let fresh = rescore(&env_cfg, rec)?;
        mismatches.extend(discrepancies(rec, &fresh, REPLAY_TOLERANCE));
        *expired.entry(rec.episode).or_default() += fresh.outcomes.iter().filter(|o| o.expired).count();
    }
    let per_episode = env_cfg.devices * env_cfg.steps * meta.config.eval_episodes;
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    for row in &rows {
        match expired.get(&row.episode) {
            Some(&count) => {
                let recomputed = pct(count, per_episode);
                if recomputed != row.pct_expired_tasks {
                    mismatches.push(format!(
                        "episode {}: pct_expired_tasks {} vs recomputed {recomputed}",
                        row.episode, row.pct_expired_tasks
                    ));
                }
            }
            None => mismatches.push(format!("episode {}: no dumped steps", row.episode)),
        }
    }
    Ok(ReplayReport {
        steps: records.len(),
        episodes: expired.len(),
        mismatches,
    })
}
