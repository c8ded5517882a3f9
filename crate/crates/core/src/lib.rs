//! Deterministic 2D collective-transport simulator.
//!
//! The crate is organized bottom-up:
//!
//! * [`world`]: robots, objects, unicycle kinematics and quasi-static
//!   pushing at a fixed timestep.
//! * [`fsm`]: the per-task transport controller (deploy, approach, push,
//!   rotate).
//! * [`orchestrator`]: tasks, teams, the pending queue, relocation orders
//!   with team freeze, reassignment and interaction modes.
//! * [`sim`]: glue that runs one orchestrated tick after another.

pub mod audit;
pub mod config;
pub mod fsm;
pub mod geometry;
pub mod ids;
pub mod orchestrator;
pub mod pose;
pub mod sim;
pub mod steering;
pub mod world;

pub use config::{Arena, ControllerParams, OrchestratorConfig, SimConfig, WorldConfig};
pub use fsm::{FsmState, TaskController};
pub use ids::{ObjectId, RobotId, TaskId};
pub use orchestrator::{InteractionMode, OperatorCommand, Orchestrator, TaskStatus};
pub use pose::Pose2D;
pub use sim::Simulation;
pub use world::{ObjectState, RobotState, VelocityCommand, WorldState};
