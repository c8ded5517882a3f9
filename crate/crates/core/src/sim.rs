//! A world plus its orchestrator, stepped one tick at a time.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SimConfig};
use crate::ids::{ObjectId, RobotId};
use crate::orchestrator::{CommandError, CommandOutcome, OperatorCommand, Orchestrator};
use crate::pose::Pose2D;
use crate::world::{ObjectState, RobotState, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("failure time {at}s is not after the current time {now}s")]
    FailureNotInFuture { at: f64, now: f64 },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug)]
pub struct Simulation {
    cfg: SimConfig,
    world: WorldState,
    orch: Orchestrator,
    /// (tick, robot), sorted.
    failures: Vec<(u64, RobotId)>,
}

impl Simulation {
    pub fn new(cfg: SimConfig, world: WorldState) -> Result<Self, SimError> {
        cfg.validate()?;
        let orch = Orchestrator::new(&cfg);
        let mut sim = Self {
            cfg,
            world,
            orch,
            failures: Vec::new(),
        };
        sim.orch.sync_world(&mut sim.world);
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orch
    }

    pub fn orchestrator_mut(&mut self) -> &mut Orchestrator {
        &mut self.orch
    }

    pub fn time(&self) -> f64 {
        self.world.time()
    }

    pub fn tick_count(&self) -> u64 {
        self.world.tick()
    }

    /// Applies an operator command at the current tick boundary.
    pub fn apply_command(
        &mut self,
        cmd: &OperatorCommand,
        seq: Option<u64>,
    ) -> Result<CommandOutcome, CommandError> {
        self.orch.apply(&mut self.world, cmd, seq)
    }

    /// Schedules `robot` to fail at simulated time `at` (seconds). The
    /// failure lands on the first tick boundary at or after `at`.
    pub fn schedule_failure(&mut self, robot: RobotId, at: f64) -> Result<(), SimError> {
        if self.world.robot(robot).is_none() {
            return Err(SimError::UnknownRobot(robot));
        }
        let now = self.world.time();
        if !at.is_finite() || at <= now {
            return Err(SimError::FailureNotInFuture { at, now });
        }
        let tick = (at / self.cfg.world.dt - 1e-9).ceil() as u64;
        self.failures.push((tick, robot));
        self.failures.sort();
        Ok(())
    }

    /// Marks `robot` failed right away.
    pub fn fail_now(&mut self, robot: RobotId) -> Result<(), SimError> {
        let r = self
            .world
            .robot_mut(robot)
            .ok_or(SimError::UnknownRobot(robot))?;
        r.failed = true;
        Ok(())
    }

    /// Runs one full tick: due failures, orchestration, physics, rotation
    /// coupling.
    pub fn tick(&mut self) -> Result<(), SimError> {
        let now = self.world.tick();
        while let Some(&(tick, robot)) = self.failures.first() {
            if tick > now {
                break;
            }
            self.failures.remove(0);
            self.fail_now(robot)?;
        }
        let commands = self.orch.orchestrate_tick(&mut self.world);
        let before = self.world.clone();
        self.world.advance(&self.cfg.world, &commands)?;
        self.orch.post_step(&before, &mut self.world);
        Ok(())
    }
}

/// Initial placement of robots and objects, loadable from TOML.
///
/// ```toml
/// [[robots]]
/// id = 1
/// x = -0.5
/// y = 1.2
/// theta_deg = 90.0
///
/// [[objects]]
/// id = 1
/// x = 0.0
/// y = 0.0
/// min_robots = 2
///
/// [[failures]]
/// robot = 1
/// at = 30.0
///
/// [[commands]]
/// at = 0.0
/// message = '{"v":1,"seq":1,"kind":"SetGoal","object":1,"x":0.0,"y":-1.0,"theta_deg":152.0}'
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub failures: Vec<FailureSpec>,
    /// Wire-format command frames replayed by a server at time `at`.
    #[serde(default)]
    pub commands: Vec<ScriptedMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta_deg: f64,
    /// Defaults to the configured object radius.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_min_robots")]
    pub min_robots: usize,
}

fn default_min_robots() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub robot: u32,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedMessage {
    pub at: f64,
    pub message: String,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Builds the initial world.
    pub fn build_world(&self, cfg: &SimConfig) -> Result<WorldState, SimError> {
        let mut world = WorldState::new(cfg.world.arena);
        for o in &self.objects {
            world.add_object(ObjectState::new(
                ObjectId(o.id),
                Pose2D::from_degrees(o.x, o.y, o.theta_deg),
                o.radius.unwrap_or(cfg.world.object_radius),
                o.min_robots,
            ))?;
        }
        for r in &self.robots {
            world.add_robot(RobotState::new(
                RobotId(r.id),
                Pose2D::from_degrees(r.x, r.y, r.theta_deg),
                cfg.world.robot_radius,
            ))?;
        }
        Ok(world)
    }

    /// Builds a simulation with the scenario's failures scheduled.
    pub fn build(&self, cfg: SimConfig) -> Result<Simulation, SimError> {
        let world = self.build_world(&cfg)?;
        let mut sim = Simulation::new(cfg, world)?;
        for f in &self.failures {
            sim.schedule_failure(RobotId(f.robot), f.at)?;
        }
        Ok(sim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO: &str = r#"
        [[robots]]
        id = 1
        x = -0.5
        y = 1.0
        [[robots]]
        id = 2
        x = 0.5
        y = 1.0
        theta_deg = 180.0
        [[objects]]
        id = 1
        x = 0.0
        y = 0.0
        min_robots = 2
        [[failures]]
        robot = 2
        at = 0.35
    "#;

    #[test]
    fn scenario_builds_and_fails_on_schedule() {
        let scenario = Scenario::from_toml_str(SCENARIO).unwrap();
        let mut sim = scenario.build(SimConfig::default()).unwrap();
        assert_eq!(sim.world().robots().len(), 2);
        for _ in 0..4 {
            sim.tick().unwrap();
            assert!(!sim.world().robot(RobotId(2)).unwrap().failed);
        }
        sim.tick().unwrap();
        assert!(sim.world().robot(RobotId(2)).unwrap().failed);
    }

    #[test]
    fn failure_must_be_in_future_and_known() {
        let scenario = Scenario::from_toml_str(SCENARIO).unwrap();
        let mut sim = scenario.build(SimConfig::default()).unwrap();
        assert!(matches!(
            sim.schedule_failure(RobotId(9), 1.0),
            Err(SimError::UnknownRobot(_))
        ));
        assert!(matches!(
            sim.schedule_failure(RobotId(1), 0.0),
            Err(SimError::FailureNotInFuture { .. })
        ));
    }

    #[test]
    fn unknown_scenario_key_rejected() {
        assert!(Scenario::from_toml_str("[[robots]]\nid = 1\nx = 0\ny = 0\nspeed = 2\n").is_err());
    }
}
