use std::path::Path;

use mec_core::{EpisodeConfig, TableParams};
use mec_learn::{Algorithm, LearnerConfig};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Everything one run needs. Loaded from TOML; CLI flags override single
/// fields afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub episodes: usize,
    /// Evaluation episodes after each evaluated training episode.
    pub eval_episodes: usize,
    /// Evaluate every `eval_stride`-th training episode (and the last one).
    pub eval_stride: usize,
    /// Evaluation episode `k` resets the environment with `eval_seed_base + k`.
    pub eval_seed_base: u64,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    /// Decay horizon of the exploration schedule; defaults to `episodes`.
    pub epsilon_horizon: Option<usize>,
    pub budget_minutes: Option<f64>,
    /// Write `checkpoint.json` every this many episodes; 0 disables.
    pub checkpoint_every: usize,
    pub dump_trajectories: bool,
    pub env: TableParams,
    pub learner: LearnerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ccm,
            seed: 37,
            episodes: 2000,
            eval_episodes: 50,
            eval_stride: 1,
            eval_seed_base: 0,
            epsilon_min: 0.01,
            epsilon_max: 1.0,
            epsilon_horizon: None,
            budget_minutes: None,
            checkpoint_every: 0,
            dump_trajectories: false,
            env: TableParams::default(),
            learner: LearnerConfig::default(),
        }
    }
}

impl RunConfig {
    /// Small setting: 5 devices, 2 sub-channels, 2 server units, 300
    /// episodes with 10 evaluation episodes each.
    pub fn desk() -> Self {
        Self {
            episodes: 300,
            eval_episodes: 10,
            env: TableParams::desk(),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn epsilon_horizon(&self) -> usize {
        self.epsilon_horizon.unwrap_or(self.episodes)
    }

    /// Checks counts and budgets and builds the environment config.
    pub fn validate(&self) -> Result<EpisodeConfig, HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.episodes == 0 || self.eval_episodes == 0 || self.eval_stride == 0 {
            return bad("episodes, eval_episodes and eval_stride must be at least 1");
        }
        if self.epsilon_horizon() == 0 {
            return bad("epsilon_horizon must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon_min)
            || !(0.0..=1.0).contains(&self.epsilon_max)
            || self.epsilon_min > self.epsilon_max
        {
            return bad("need 0 <= epsilon_min <= epsilon_max <= 1");
        }
        if let Some(b) = self.budget_minutes {
            if !(b > 0.0) {
                return bad("budget_minutes must be positive");
            }
        }
        self.learner
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.env
            .to_episode_config()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}
