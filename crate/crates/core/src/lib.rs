//! Multi-user mobile edge computing simulator: closed-form latency and
//! energy models, a per-step FIFO server scheduler and an episodic
//! environment that enforces the device and server constraints.

pub mod config;
pub mod env;
pub mod physics;
pub mod rng;
pub mod scheduler;

pub use config::{EpisodeConfig, PowerStateSource, Range, SamplingRanges, TableParams};
pub use env::{
    decode_actions, generate_tasks, ClientAction, DecodedAction, DeviceProfile, EnvError, MasterDecision, MecEnv,
    Observation, Placement, RejectFate, StepOutcome, StepResult, TaskOutcome, TaskSpec, ACTION_DIM, OBS_DIM,
};
pub use scheduler::{schedule_step, AdmittedTask, ServerConfig, ServerJob};
