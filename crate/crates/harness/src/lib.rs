//! Headless experiment runner for the collective-transport simulator.
//!
//! Every operator action goes through the server's wire encoding, so the
//! interaction counts reported here are the ones the server itself
//! records in its audit log.

pub mod driver;
pub mod experiments;
pub mod layout;
pub mod operators;
pub mod properties;
pub mod report;
pub mod stats;

use cotransport_core::sim::SimError;
use cotransport_core::world::WorldError;
use thiserror::Error;

pub use driver::Driver;
pub use experiments::{TrialOutcome, TrialRecord};
pub use stats::{summarize, StatsError, SummaryStats};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("layout: {0}")]
    Layout(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{kind} rejected: {reason}")]
    Rejected { kind: &'static str, reason: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("semantic violation: {0}")]
    Semantic(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
