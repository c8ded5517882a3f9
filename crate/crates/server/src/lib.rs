//! Network boundary for the collective-transport simulator.
//!
//! A single simulation thread owns the [`session::Session`]. Client
//! connections decode frames, push commands into the engine mailbox and
//! stream the latest [`snapshot::Snapshot`] at a fixed rate.

pub mod engine;
pub mod protocol;
pub mod session;
pub mod snapshot;
pub mod ws;

pub use engine::{Engine, EngineConfig, EngineHandle};
pub use protocol::{decode, encode, Ack, CommandMessage, ServerMessage};
pub use session::Session;
pub use snapshot::{Snapshot, SnapshotBuffer};
