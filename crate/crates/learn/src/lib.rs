//! Learners for the MEC offloading environment: the client-master
//! algorithm, actor-critic baselines with fixed admission rules, and the
//! small numeric stack they share.

pub mod agents;
pub mod approximator;
pub mod baselines;
pub mod config;
pub mod error;
pub mod learner;

pub use agents::CcmMadrl;
pub use approximator::Transition;
pub use baselines::{AdmissionRule, Maddpg};
pub use config::{ClientFeedbackPath, LearnerConfig, NoiseKind};
pub use error::LearnError;
pub use learner::{build_learner, load_learner, Algorithm, Decision, Learner, TrainReport};
