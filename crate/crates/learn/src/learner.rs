use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mec_core::rng::{stream_rng, SimRng, Stream};
use mec_core::{decode_actions, ClientAction, DecodedAction, MasterDecision, MecEnv, Observation, RejectFate};
use serde::{Deserialize, Serialize};

use crate::agents::{Action, CcmMadrl};
use crate::approximator::Transition;
use crate::baselines::{AdmissionRule, Maddpg};
use crate::config::LearnerConfig;
use crate::error::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ccm,
    Maddpg,
    MaddpgStf,
    MaddpgDsf,
    RandomMaster,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Ccm,
        Algorithm::Maddpg,
        Algorithm::MaddpgStf,
        Algorithm::MaddpgDsf,
        Algorithm::RandomMaster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ccm => "ccm",
            Algorithm::Maddpg => "maddpg",
            Algorithm::MaddpgStf => "maddpg-stf",
            Algorithm::MaddpgDsf => "maddpg-dsf",
            Algorithm::RandomMaster => "random-master",
        }
    }

    /// Admission rule of the actor-critic variants.
    pub fn admission_rule(self) -> Option<AdmissionRule> {
        match self {
            Algorithm::Ccm => None,
            Algorithm::Maddpg => Some(AdmissionRule::FifoDrop),
            Algorithm::MaddpgStf => Some(AdmissionRule::ShortestOffloadFirst),
            Algorithm::MaddpgDsf => Some(AdmissionRule::DeadlineOverSizeFirst),
            Algorithm::RandomMaster => Some(AdmissionRule::Random),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            format!("unknown algorithm {s:?}, expected one of {}", names.join(", "))
        })
    }
}

/// What a learner hands to the environment for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Scaled client actions, as stored in replay.
    pub actions: Vec<Action>,
    pub decoded: Vec<DecodedAction>,
    pub mask: MasterDecision,
}

impl Decision {
    pub fn new(env: &MecEnv, actions: Vec<Action>, mask: MasterDecision) -> Result<Self, LearnError> {
        let raw: Vec<ClientAction> = actions.iter().map(|a| ClientAction::from_slice(a)).collect();
        let decoded = decode_actions(&raw, env.devices())?;
        Ok(Self { actions, decoded, mask })
    }
}

/// Diagnostics of one training call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Unweighted mean squared TD error of the value network.
    pub td_error: f64,
    /// New replay priority source per minibatch entry (mean |δ|).
    pub priorities: Vec<f64>,
    /// Bootstrap target per minibatch entry.
    pub targets: Vec<f64>,
    /// Mean value the actors ascended.
    pub client_objective: f64,
}

/// Independent generators for weight init, client noise, admission coins
/// and shuffles, and replay sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerRngs {
    pub weights: SimRng,
    pub exploration: SimRng,
    pub admission: SimRng,
    pub replay: SimRng,
}

impl LearnerRngs {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            weights: stream_rng(seed, Stream::WeightInit),
            exploration: stream_rng(seed, Stream::Exploration),
            admission: stream_rng(seed, Stream::Admission),
            replay: stream_rng(seed, Stream::Replay),
        }
    }
}

pub trait Learner: Send {
    fn algorithm(&self) -> Algorithm;

    fn devices(&self) -> usize;

    /// What happens to proposals the admission step rejects.
    fn reject_fate(&self) -> RejectFate;

    fn act(
        &mut self,
        env: &MecEnv,
        observations: &[Observation],
        epsilon: f64,
        evaluation: bool,
    ) -> Result<Decision, LearnError>;

    fn remember(&mut self, transition: Transition) -> Result<(), LearnError>;

    fn memory_len(&self) -> usize;

    /// One training call, `progress ∈ [0, 1]` through the run. Returns
    /// `None` while the memory holds fewer than a minibatch.
    fn train(&mut self, progress: f64) -> Result<Option<TrainReport>, LearnError>;

    /// Full state: networks, targets, optimizers, replay and RNG streams.
    fn save(&self, path: &Path) -> Result<(), LearnError>;
}

pub fn build_learner(
    algorithm: Algorithm,
    cfg: &LearnerConfig,
    devices: usize,
    seed: u64,
) -> Result<Box<dyn Learner>, LearnError> {
    Ok(match algorithm.admission_rule() {
        None => Box::new(CcmMadrl::new(cfg, devices, seed)?),
        Some(rule) => Box::new(Maddpg::new(cfg, rule, devices, seed)?),
    })
}

/// Restores a learner written by [`Learner::save`].
pub fn load_learner(algorithm: Algorithm, path: &Path) -> Result<Box<dyn Learner>, LearnError> {
    Ok(match algorithm.admission_rule() {
        None => Box::new(CcmMadrl::load(path)?),
        Some(rule) => {
            let m = Maddpg::load(path)?;
            if m.rule() != rule {
                return Err(LearnError::Checkpoint(format!(
                    "checkpoint holds {:?}, not {algorithm}",
                    m.rule()
                )));
            }
            Box::new(m)
        }
    })
}
