//! Fully-connected networks with hand-written backpropagation, Adam, and
//! prioritized replay.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod replay;

pub use adam::Adam;
pub use mlp::{Activation, Mlp, MlpSpec, Trace};
pub use replay::{PerParams, ReplayMemory, SampledBatch, Transition};
