//! Experiment driver for the MEC offloading learners: run configuration,
//! the train/evaluate loop, metric files, cross-run aggregation and
//! trajectory re-scoring.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod metrics;
pub mod replay;
pub mod run;
pub mod trajectory;

pub use config::RunConfig;
pub use error::HarnessError;
pub use metrics::MetricsRow;
pub use run::{run, RunStatus, RunSummary};
