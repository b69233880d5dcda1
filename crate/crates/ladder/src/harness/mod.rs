//! Experiment orchestration: A/B traffic split, metrics accounting,
//! trace persistence, embedding export.

mod embeddings;
mod experiment;
mod metrics;
mod split;

pub use embeddings::{export_embeddings, sample_requests};
pub use experiment::{
    replay_trace, run_experiment, DaySplit, ExperimentConfig, RunArtifacts, TraceRecord,
};
pub use metrics::{MetricsBook, MetricsSnapshot};
pub use split::{ab_assign, splitmix64, SplitSchedule};

use crate::agent::AgentError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which policy serves an auction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Ladder,
    Baseline,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Ladder => "ladder",
            Arm::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid experiment config: {0}")]
    Config(String),
}

impl From<crate::sim::SimError> for HarnessError {
    fn from(e: crate::sim::SimError) -> Self {
        HarnessError::Agent(e.into())
    }
}

impl From<crate::replay::ReplayError> for HarnessError {
    fn from(e: crate::replay::ReplayError) -> Self {
        HarnessError::Agent(e.into())
    }
}

impl From<crate::qnet::QnetError> for HarnessError {
    fn from(e: crate::qnet::QnetError) -> Self {
        HarnessError::Agent(e.into())
    }
}

impl From<crate::baseline::BaselineError> for HarnessError {
    fn from(e: crate::baseline::BaselineError) -> Self {
        HarnessError::Agent(e.into())
    }
}
