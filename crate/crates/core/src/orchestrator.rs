//! Task orchestration: tasks and teams, the pending queue, operator
//! commands, relocation orders with team freeze, and reassignment.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditLog, AuditRecord};
use crate::config::{ControllerParams, OrchestratorConfig, SimConfig, WorldConfig};
use crate::fsm::{FsmState, TaskController, Transition};
use crate::ids::{ObjectId, RobotId, TaskId};
use crate::pose::Pose2D;
use crate::steering::{self, Limits, Obstacle};
use crate::world::{VelocityCommand, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// Only individual robots may be commanded.
    RobotOnly,
    /// Goals, robots and reassignment are all available.
    #[default]
    Combined,
}

impl fmt::Display for InteractionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InteractionMode::RobotOnly => "robot_only",
            InteractionMode::Combined => "combined",
        })
    }
}

impl std::str::FromStr for InteractionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "robot_only" => Ok(InteractionMode::RobotOnly),
            "combined" => Ok(InteractionMode::Combined),
            other => Err(format!(
                "unknown mode {other:?} (expected robot_only or combined)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskStatus {
    Queued,
    Active,
    Complete,
    Cancelled,
}

/// A command from the operator, already converted to internal units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OperatorCommand {
    SetGoal { object: ObjectId, goal: Pose2D },
    MoveRobot { robot: RobotId, x: f64, y: f64 },
    ReassignRobot { robot: RobotId, object: ObjectId },
    SetMode { mode: InteractionMode },
    Ping,
}

impl OperatorCommand {
    pub fn kind(&self) -> &'static str {
        match self {
            OperatorCommand::SetGoal { .. } => "SetGoal",
            OperatorCommand::MoveRobot { .. } => "MoveRobot",
            OperatorCommand::ReassignRobot { .. } => "ReassignRobot",
            OperatorCommand::SetMode { .. } => "SetMode",
            OperatorCommand::Ping => "Ping",
        }
    }

    /// Pings keep a session alive and are not interactions.
    pub fn is_interaction(&self) -> bool {
        !matches!(self, OperatorCommand::Ping)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommandError {
    #[error("{kind} is not allowed in {mode} mode")]
    ModeViolation {
        kind: &'static str,
        mode: InteractionMode,
    },
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("object {object} already has active task {task}")]
    DuplicateTask { object: ObjectId, task: TaskId },
    #[error("robot {0} has failed")]
    RobotFailed(RobotId),
    #[error("target ({x:.3}, {y:.3}) is outside the arena")]
    OutsideArena { x: f64, y: f64 },
    #[error("object {0} has no queued or active task")]
    NoTaskForObject(ObjectId),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CommandOutcome {
    TaskActive(TaskId),
    TaskQueued(TaskId),
    /// The goal was already met; the task completed on creation.
    TaskComplete(TaskId),
    Relocating(RobotId),
    Reassigned {
        robot: RobotId,
        task: TaskId,
    },
    ModeSet(InteractionMode),
    Pong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportTask {
    pub id: TaskId,
    pub object: ObjectId,
    pub goal: Pose2D,
    /// Sorted by id.
    pub team: Vec<RobotId>,
    pub status: TaskStatus,
    pub controller: TaskController,
    pub submitted_tick: u64,
    pub completed_tick: Option<u64>,
}

impl TransportTask {
    pub fn fsm_state(&self) -> FsmState {
        self.controller.state()
    }

    fn is_open(&self) -> bool {
        matches!(self.status, TaskStatus::Active | TaskStatus::Queued)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelocationOrder {
    pub robot: RobotId,
    pub target: Pose2D,
    pub issued_tick: u64,
}

/// Things that happened during a tick or command, for timelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrchestratorEvent {
    Transition {
        tick: u64,
        task: TaskId,
        from: FsmState,
        to: FsmState,
    },
    Activated {
        tick: u64,
        task: TaskId,
    },
    Suspended {
        tick: u64,
        task: TaskId,
    },
    Completed {
        tick: u64,
        task: TaskId,
        object: ObjectId,
    },
    Reassigned {
        tick: u64,
        robot: RobotId,
        from: Option<TaskId>,
        to: TaskId,
    },
    RelocationClosed {
        tick: u64,
        robot: RobotId,
        timed_out: bool,
    },
    RobotFailed {
        tick: u64,
        robot: RobotId,
    },
}

#[derive(Debug)]
pub struct Orchestrator {
    cfg: OrchestratorConfig,
    params: ControllerParams,
    world_cfg: WorldConfig,
    mode: InteractionMode,
    tasks: Vec<TransportTask>,
    queue: VecDeque<TaskId>,
    orders: BTreeMap<RobotId, RelocationOrder>,
    failed: BTreeSet<RobotId>,
    interactions: u64,
    audit: AuditLog,
    events: Vec<OrchestratorEvent>,
}

impl Orchestrator {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            cfg: cfg.orchestrator.clone(),
            params: cfg.controller.clone(),
            world_cfg: cfg.world.clone(),
            mode: cfg.orchestrator.mode,
            tasks: Vec::new(),
            queue: VecDeque::new(),
            orders: BTreeMap::new(),
            failed: BTreeSet::new(),
            interactions: 0,
            audit: AuditLog::new(),
            events: Vec::new(),
        }
    }

    pub fn mode(&self) -> InteractionMode {
        self.mode
    }

    pub fn tasks(&self) -> &[TransportTask] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> Option<&TransportTask> {
        self.index_of(id).map(|i| &self.tasks[i])
    }

    /// The open (queued or active) task working on `object`.
    pub fn task_for_object(&self, object: ObjectId) -> Option<&TransportTask> {
        self.tasks
            .iter()
            .find(|t| t.object == object && t.is_open())
    }

    /// The most recent task created for `object`, whatever its status.
    pub fn latest_task_for_object(&self, object: ObjectId) -> Option<&TransportTask> {
        self.tasks.iter().rev().find(|t| t.object == object)
    }

    /// The open task whose team contains `robot`.
    pub fn task_of(&self, robot: RobotId) -> Option<&TransportTask> {
        self.tasks
            .iter()
            .find(|t| t.is_open() && t.team.contains(&robot))
    }

    pub fn queue(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.queue.iter().copied()
    }

    pub fn orders(&self) -> &BTreeMap<RobotId, RelocationOrder> {
        &self.orders
    }

    pub fn failed(&self) -> &BTreeSet<RobotId> {
        &self.failed
    }

    pub fn interaction_count(&self) -> u64 {
        self.interactions
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn audit_mut(&mut self) -> &mut AuditLog {
        &mut self.audit
    }

    /// Drains the event timeline gathered so far.
    pub fn take_events(&mut self) -> Vec<OrchestratorEvent> {
        std::mem::take(&mut self.events)
    }

    /// Robots that are neither failed, on a team, nor relocating.
    pub fn idle_robots(&self, world: &WorldState) -> Vec<RobotId> {
        world
            .robots()
            .iter()
            .filter(|r| {
                !r.failed
                    && !self.failed.contains(&r.id)
                    && !self.orders.contains_key(&r.id)
                    && self.task_of(r.id).is_none()
            })
            .map(|r| r.id)
            .collect()
    }

    /// Teamless robots with an open relocation order.
    pub fn relocating_robots(&self) -> Vec<RobotId> {
        self.orders
            .keys()
            .filter(|r| self.task_of(**r).is_none())
            .copied()
            .collect()
    }

    /// Robots held still because a teammate is relocating.
    pub fn frozen_robots(&self) -> BTreeSet<RobotId> {
        let mut frozen = BTreeSet::new();
        for robot in self.orders.keys() {
            if let Some(task) = self.task_of(*robot) {
                frozen.extend(
                    task.team
                        .iter()
                        .filter(|m| !self.orders.contains_key(m))
                        .copied(),
                );
            }
        }
        frozen
    }

    fn index_of(&self, id: TaskId) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    fn index_for_object(&self, object: ObjectId) -> Option<usize> {
        self.tasks
            .iter()
            .position(|t| t.object == object && t.is_open())
    }

    fn limits(&self) -> Limits {
        Limits {
            v_max: self.world_cfg.v_max,
            omega_max: self.world_cfg.omega_max,
        }
    }

    /// Validates and applies one operator command, writing an audit record
    /// either way. Accepted non-Ping commands increment the interaction
    /// counter.
    pub fn apply(
        &mut self,
        world: &mut WorldState,
        cmd: &OperatorCommand,
        seq: Option<u64>,
    ) -> Result<CommandOutcome, CommandError> {
        let result = self.dispatch(world, cmd);
        let counted = result.is_ok() && cmd.is_interaction();
        if counted {
            self.interactions += 1;
        }
        let record = AuditRecord::Command {
            tick: world.tick(),
            seq,
            command: cmd.clone(),
            accepted: result.is_ok(),
            reason: result.as_ref().err().map(|e| e.to_string()),
            counted,
        };
        if let Err(e) = self.audit.push(record) {
            log::warn!("audit sink write failed: {e}");
        }
        self.sync_world(world);
        result
    }

    fn dispatch(
        &mut self,
        world: &mut WorldState,
        cmd: &OperatorCommand,
    ) -> Result<CommandOutcome, CommandError> {
        match cmd {
            OperatorCommand::SetGoal { object, goal } => self.submit_goal(world, *object, *goal),
            OperatorCommand::MoveRobot { robot, x, y } => {
                self.relocate_robot(world, *robot, *x, *y)
            }
            OperatorCommand::ReassignRobot { robot, object } => {
                self.reassign_robot(world, *robot, *object)
            }
            OperatorCommand::SetMode { mode } => {
                self.mode = *mode;
                Ok(CommandOutcome::ModeSet(*mode))
            }
            OperatorCommand::Ping => Ok(CommandOutcome::Pong),
        }
    }

    fn require_combined(&self, kind: &'static str) -> Result<(), CommandError> {
        if self.mode == InteractionMode::Combined {
            Ok(())
        } else {
            Err(CommandError::ModeViolation {
                kind,
                mode: self.mode,
            })
        }
    }

    /// Idle robots ordered nearest-first to `at`, ties by id.
    fn nearest_idle(&self, world: &WorldState, at: Vector2<f64>) -> Vec<RobotId> {
        let mut idle: Vec<(f64, RobotId)> = self
            .idle_robots(world)
            .into_iter()
            .map(|id| {
                let r = world.robot(id).expect("idle robots exist");
                ((r.position() - at).norm(), id)
            })
            .collect();
        idle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        idle.into_iter().map(|(_, id)| id).collect()
    }

    fn submit_goal(
        &mut self,
        world: &mut WorldState,
        object: ObjectId,
        goal: Pose2D,
    ) -> Result<CommandOutcome, CommandError> {
        self.require_combined("SetGoal")?;
        if !goal.is_finite() {
            return Err(CommandError::NonFinite("goal"));
        }
        let obj = world
            .object(object)
            .ok_or(CommandError::UnknownObject(object))?
            .clone();
        if !world.arena().contains(goal.x, goal.y) {
            return Err(CommandError::OutsideArena {
                x: goal.x,
                y: goal.y,
            });
        }
        if let Some(i) = self.index_for_object(object) {
            let task = &mut self.tasks[i];
            if task.status == TaskStatus::Active {
                return Err(CommandError::DuplicateTask {
                    object,
                    task: task.id,
                });
            }
            // a queued goal may be retargeted
            task.goal = goal;
            task.controller.set_goal(goal);
            let team = task.team.clone();
            task.controller
                .on_team_changed(world, &team)
                .expect("queued task team exists");
            return Ok(CommandOutcome::TaskQueued(task.id));
        }

        let id = TaskId(self.tasks.len() as u32 + 1);
        let mut team: Vec<RobotId> = self
            .nearest_idle(world, obj.position())
            .into_iter()
            .take(self.cfg.default_team_size)
            .collect();
        team.sort();
        let controller = TaskController::new(
            id,
            object,
            goal,
            self.params.clone(),
            &self.world_cfg,
            world,
            &team,
        )
        .expect("object and team robots exist");
        self.tasks.push(TransportTask {
            id,
            object,
            goal,
            team,
            status: TaskStatus::Queued,
            controller,
            submitted_tick: world.tick(),
            completed_tick: None,
        });
        let i = self.tasks.len() - 1;
        if self.tasks[i].team.len() >= obj.min_robots {
            self.activate(world, i);
            if self.tasks[i].status == TaskStatus::Complete {
                return Ok(CommandOutcome::TaskComplete(id));
            }
            Ok(CommandOutcome::TaskActive(id))
        } else {
            self.queue.push_back(id);
            Ok(CommandOutcome::TaskQueued(id))
        }
    }

    fn relocate_robot(
        &mut self,
        world: &mut WorldState,
        robot: RobotId,
        x: f64,
        y: f64,
    ) -> Result<CommandOutcome, CommandError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(CommandError::NonFinite("target"));
        }
        let r = world
            .robot(robot)
            .ok_or(CommandError::UnknownRobot(robot))?;
        if r.failed || self.failed.contains(&robot) {
            return Err(CommandError::RobotFailed(robot));
        }
        let radius = r.body_radius;
        let arena = world.arena();
        if x - radius < arena.min_x
            || x + radius > arena.max_x
            || y - radius < arena.min_y
            || y + radius > arena.max_y
        {
            return Err(CommandError::OutsideArena { x, y });
        }
        // re-issuing replaces the open order
        self.orders.insert(
            robot,
            RelocationOrder {
                robot,
                target: Pose2D::new(x, y, 0.0),
                issued_tick: world.tick(),
            },
        );
        Ok(CommandOutcome::Relocating(robot))
    }

    fn reassign_robot(
        &mut self,
        world: &mut WorldState,
        robot: RobotId,
        object: ObjectId,
    ) -> Result<CommandOutcome, CommandError> {
        self.require_combined("ReassignRobot")?;
        let r = world
            .robot(robot)
            .ok_or(CommandError::UnknownRobot(robot))?;
        if r.failed || self.failed.contains(&robot) {
            return Err(CommandError::RobotFailed(robot));
        }
        world
            .object(object)
            .ok_or(CommandError::UnknownObject(object))?;
        let target = self
            .index_for_object(object)
            .ok_or(CommandError::NoTaskForObject(object))?;
        let target_id = self.tasks[target].id;
        let source = self
            .tasks
            .iter()
            .position(|t| t.is_open() && t.team.contains(&robot));
        if source == Some(target) {
            return Ok(CommandOutcome::Reassigned {
                robot,
                task: target_id,
            });
        }
        self.close_order(world, robot, false);

        let tick = world.tick();
        if let Some(s) = source {
            self.tasks[s].team.retain(|m| *m != robot);
            self.team_changed(world, s);
        }
        let t = &mut self.tasks[target];
        t.team.push(robot);
        t.team.sort();
        self.team_changed(world, target);
        let min = world.object(object).map(|o| o.min_robots).unwrap_or(1);
        if self.tasks[target].status == TaskStatus::Queued && self.tasks[target].team.len() >= min {
            self.queue.retain(|q| *q != target_id);
            self.activate(world, target);
        }
        self.events.push(OrchestratorEvent::Reassigned {
            tick,
            robot,
            from: source.map(|s| self.tasks[s].id),
            to: target_id,
        });
        Ok(CommandOutcome::Reassigned {
            robot,
            task: target_id,
        })
    }

    /// Re-lays slots after a membership change and suspends the task when
    /// it falls below its minimum team size.
    fn team_changed(&mut self, world: &WorldState, i: usize) {
        let tick = world.tick();
        let task = &mut self.tasks[i];
        let team = task.team.clone();
        if let Some(t) = task
            .controller
            .on_team_changed(world, &team)
            .expect("team robots exist")
        {
            self.events.push(OrchestratorEvent::Transition {
                tick,
                task: task.id,
                from: t.from,
                to: t.to,
            });
        }
        let min = world.object(task.object).map(|o| o.min_robots).unwrap_or(1);
        if task.status == TaskStatus::Active && task.team.len() < min {
            task.status = TaskStatus::Queued;
            let id = task.id;
            self.queue.push_back(id);
            self.events
                .push(OrchestratorEvent::Suspended { tick, task: id });
        }
    }

    fn activate(&mut self, world: &WorldState, i: usize) {
        let tick = world.tick();
        let task = &mut self.tasks[i];
        task.status = TaskStatus::Active;
        let team = task.team.clone();
        task.controller
            .on_team_changed(world, &team)
            .expect("team robots exist");
        self.events.push(OrchestratorEvent::Activated {
            tick,
            task: task.id,
        });
        let object = world.object(task.object).expect("task object exists");
        if task.controller.goal_satisfied(object) {
            task.controller = task.controller.clone().already_complete();
            self.complete(world, i);
        }
    }

    fn complete(&mut self, world: &WorldState, i: usize) {
        let tick = world.tick();
        let task = &mut self.tasks[i];
        task.status = TaskStatus::Complete;
        task.completed_tick = Some(tick);
        task.team.clear();
        let (id, object) = (task.id, task.object);
        self.queue.retain(|q| *q != id);
        self.events.push(OrchestratorEvent::Completed {
            tick,
            task: id,
            object,
        });
    }

    /// Cancels an open task and releases its robots.
    pub fn cancel_task(&mut self, world: &mut WorldState, id: TaskId) -> bool {
        let Some(i) = self.index_of(id) else {
            return false;
        };
        if !self.tasks[i].is_open() {
            return false;
        }
        self.tasks[i].status = TaskStatus::Cancelled;
        self.tasks[i].team.clear();
        self.queue.retain(|q| *q != id);
        self.sync_world(world);
        true
    }

    /// Closes the order of `robot`, if any. When the last open order in a
    /// team closes, the team's slots are laid out afresh.
    fn close_order(&mut self, world: &mut WorldState, robot: RobotId, timed_out: bool) {
        if self.orders.remove(&robot).is_none() {
            return;
        }
        let tick = world.tick();
        self.events.push(OrchestratorEvent::RelocationClosed {
            tick,
            robot,
            timed_out,
        });
        if timed_out {
            if let Err(e) = self
                .audit
                .push(AuditRecord::RelocationTimeout { tick, robot })
            {
                log::warn!("audit sink write failed: {e}");
            }
        }
        if let Some(i) = self
            .tasks
            .iter()
            .position(|t| t.is_open() && t.team.contains(&robot))
        {
            let others_open = self.tasks[i]
                .team
                .iter()
                .any(|m| self.orders.contains_key(m));
            if !others_open {
                self.sync_world(world);
                self.team_changed(world, i);
            }
        }
    }

    /// Marks newly failed robots, removes them from their teams and drops
    /// their orders.
    fn prune_failures(&mut self, world: &mut WorldState) {
        let newly: Vec<RobotId> = world
            .robots()
            .iter()
            .filter(|r| r.failed && !self.failed.contains(&r.id))
            .map(|r| r.id)
            .collect();
        for robot in newly {
            self.failed.insert(robot);
            self.events.push(OrchestratorEvent::RobotFailed {
                tick: world.tick(),
                robot,
            });
            self.close_order(world, robot, false);
            if let Some(i) = self
                .tasks
                .iter()
                .position(|t| t.is_open() && t.team.contains(&robot))
            {
                self.tasks[i].team.retain(|m| *m != robot);
                self.sync_world(world);
                self.team_changed(world, i);
            }
        }
    }

    fn process_orders(&mut self, world: &mut WorldState) {
        let timeout_ticks = (self.cfg.relocation_timeout / self.world_cfg.dt).ceil() as u64;
        let tick = world.tick();
        let due: Vec<(RobotId, bool)> = self
            .orders
            .values()
            .filter_map(|o| {
                let r = world.robot(o.robot)?;
                if (r.position() - o.target.position()).norm() <= self.params.slot_tol {
                    Some((o.robot, false))
                } else if tick.saturating_sub(o.issued_tick) >= timeout_ticks {
                    Some((o.robot, true))
                } else {
                    None
                }
            })
            .collect();
        for (robot, timed_out) in due {
            self.close_order(world, robot, timed_out);
        }
    }

    /// Starts queued tasks whose team is empty once enough robots are idle.
    /// Partially staffed tasks wait for the operator to reassign robots.
    fn dispatch_queue(&mut self, world: &mut WorldState) {
        let queued: Vec<TaskId> = self.queue.iter().copied().collect();
        for id in queued {
            let i = self.index_of(id).expect("queued task exists");
            if !self.tasks[i].team.is_empty() {
                continue;
            }
            let object = world
                .object(self.tasks[i].object)
                .expect("task object exists");
            let min = object.min_robots;
            let at = object.position();
            let idle = self.nearest_idle(world, at);
            if idle.len() < min {
                break;
            }
            let mut team: Vec<RobotId> =
                idle.into_iter().take(self.cfg.default_team_size).collect();
            team.sort();
            self.tasks[i].team = team;
            self.queue.retain(|q| *q != id);
            self.sync_world(world);
            self.activate(world, i);
        }
    }

    /// Writes team, freeze and slot flags into the world.
    pub fn sync_world(&self, world: &mut WorldState) {
        let frozen = self.frozen_robots();
        let mut membership: BTreeMap<RobotId, (TaskId, Option<usize>)> = BTreeMap::new();
        for task in self.tasks.iter().filter(|t| t.is_open()) {
            for m in &task.team {
                let slot = if task.status == TaskStatus::Active {
                    task.controller.slot_of(*m)
                } else {
                    None
                };
                membership.insert(*m, (task.id, slot));
            }
        }
        let ids: Vec<RobotId> = world.robots().iter().map(|r| r.id).collect();
        for id in ids {
            let r = world.robot_mut(id).expect("listed robot exists");
            let m = membership.get(&id);
            r.team = m.map(|m| m.0);
            r.slot_index = m.and_then(|m| m.1);
            r.frozen = frozen.contains(&id);
        }
    }

    /// One orchestration step: handles failures, order arrivals and
    /// timeouts, advances every active controller, starts eligible queued
    /// tasks and returns the merged command map.
    pub fn orchestrate_tick(
        &mut self,
        world: &mut WorldState,
    ) -> BTreeMap<RobotId, VelocityCommand> {
        let tick = world.tick();
        self.sync_world(world);
        self.prune_failures(world);
        self.process_orders(world);
        self.sync_world(world);

        for i in 0..self.tasks.len() {
            if self.tasks[i].status != TaskStatus::Active {
                continue;
            }
            let team = self.tasks[i].team.clone();
            let taken: Vec<Transition> = self.tasks[i]
                .controller
                .update(world, &team)
                .expect("active task robots and object exist");
            let id = self.tasks[i].id;
            for t in &taken {
                debug_assert!(FsmState::is_legal_transition(t.from, t.to));
                self.events.push(OrchestratorEvent::Transition {
                    tick,
                    task: id,
                    from: t.from,
                    to: t.to,
                });
            }
            if self.tasks[i].controller.state() == FsmState::Complete {
                self.complete(world, i);
            }
        }
        self.sync_world(world);
        self.dispatch_queue(world);
        self.sync_world(world);

        let mut commands = BTreeMap::new();
        for task in self.tasks.iter().filter(|t| t.status == TaskStatus::Active) {
            let cmds = task
                .controller
                .robot_commands(world, &task.team)
                .expect("active task robots and object exist");
            for (robot, cmd) in cmds {
                let previous = commands.insert(robot, cmd);
                assert!(previous.is_none(), "robot {robot} commanded by two tasks");
            }
        }
        let frozen = self.frozen_robots();
        for robot in &frozen {
            commands.insert(*robot, VelocityCommand::ZERO);
        }
        for order in self.orders.values() {
            commands.insert(order.robot, self.relocation_command(world, order));
        }
        commands
    }

    fn relocation_command(&self, world: &WorldState, order: &RelocationOrder) -> VelocityCommand {
        let Some(robot) = world.robot(order.robot) else {
            return VelocityCommand::ZERO;
        };
        let obstacles: Vec<Obstacle> = world
            .robots()
            .iter()
            .filter(|r| r.id != robot.id)
            .map(|r| Obstacle {
                center: r.position(),
                radius: r.body_radius,
            })
            .collect();
        let target = order.target.position();
        steering::navigate(
            &robot.pose,
            robot.body_radius,
            target,
            target,
            self.params.slot_tol / 2.0,
            self.world_cfg.v_max,
            &obstacles,
            &self.limits(),
        )
    }

    /// Hook run after the world stepped: couples object headings to the
    /// orbit of rotating teams.
    pub fn post_step(&self, before: &WorldState, after: &mut WorldState) {
        for task in self.tasks.iter().filter(|t| t.status == TaskStatus::Active) {
            task.controller.couple_rotation(before, after, &task.team);
        }
    }

    /// Checks the bookkeeping invariants; returns a description of the
    /// first violation.
    pub fn check_invariants(&self, world: &WorldState) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        let mut team_total = 0usize;
        for task in self.tasks.iter().filter(|t| t.is_open()) {
            for m in &task.team {
                if !seen.insert(*m) {
                    return Err(format!("robot {m} is on two teams"));
                }
                if self.failed.contains(m) {
                    return Err(format!("failed robot {m} is on {}", task.id));
                }
            }
            team_total += task.team.len();
            let min = world
                .object(task.object)
                .ok_or_else(|| format!("{} lost its object", task.id))?
                .min_robots;
            if task.status == TaskStatus::Active && task.team.len() < min {
                return Err(format!(
                    "{} active with {} < {min} robots",
                    task.id,
                    task.team.len()
                ));
            }
            if task.status == TaskStatus::Active
                && task.controller.state() != FsmState::Complete
                && task.controller.slots().len() != task.team.len()
            {
                return Err(format!(
                    "{} has {} slots for {} robots",
                    task.id,
                    task.controller.slots().len(),
                    task.team.len()
                ));
            }
        }
        let total = self.idle_robots(world).len()
            + team_total
            + self.relocating_robots().len()
            + self.failed.len();
        if total != world.robots().len() {
            return Err(format!(
                "robot conservation broken: {total} accounted, {} exist",
                world.robots().len()
            ));
        }
        if self.audit.interaction_count() != self.interactions {
            return Err("interaction counter disagrees with the audit log".into());
        }
        Ok(())
    }
}
