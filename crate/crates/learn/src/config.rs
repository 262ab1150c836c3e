use serde::{Deserialize, Serialize};

use crate::approximator::{Activation, PerParams};
use crate::error::LearnError;

/// Exploration noise added to raw client outputs before clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Standard normal draws scaled by ε.
    #[default]
    Gaussian,
    /// Uniform draws on [-1, 1) scaled by ε.
    UniformSymmetric,
}

/// Which master inputs carry the gradient back to a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientFeedbackPath {
    /// The client's own slot in the joint action plus the candidate slot
    /// when it is the arg-max proposer.
    #[default]
    JointAndCandidate,
    /// Only the candidate slot. A client that is not the arg-max proposer
    /// gets no gradient from that entry.
    CandidateOnly,
}

/// Learning hyperparameters shared by every learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub client_lr: f64,
    pub master_lr: f64,
    pub client_hidden: Vec<usize>,
    pub master_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub master_output: Activation,
    pub client_final_layer_scale: f64,
    pub noise: NoiseKind,
    pub feedback_path: ClientFeedbackPath,
    /// Multiplier on stored rewards before they enter any target.
    pub reward_scale: f64,
    /// Prioritized sampling; `None` draws uniformly.
    pub per: Option<PerParams>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 64,
            replay_capacity: 10_000,
            client_lr: 1e-4,
            master_lr: 1e-3,
            client_hidden: vec![64, 32],
            master_hidden: vec![512, 128],
            hidden_activation: Activation::Relu,
            master_output: Activation::Identity,
            client_final_layer_scale: 0.01,
            noise: NoiseKind::Gaussian,
            feedback_path: ClientFeedbackPath::JointAndCandidate,
            reward_scale: 1e-3,
            per: Some(PerParams::default()),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("batch size must be positive and fit in the replay memory");
        }
        if !(self.client_lr > 0.0 && self.master_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.client_hidden.is_empty() || self.master_hidden.is_empty() {
            return bad("networks need at least one hidden layer");
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward scale must be positive");
        }
        if let Some(per) = &self.per {
            if per.alpha < 0.0 || per.epsilon <= 0.0 {
                return bad("PER needs alpha >= 0 and epsilon > 0");
            }
        }
        Ok(())
    }

    pub(crate) fn per_params(&self) -> PerParams {
        self.per.unwrap_or_else(PerParams::uniform)
    }
}
