//! Collective transport controller.
//!
//! One [`TaskController`] drives one team through four phases:
//!
//! * `ReachObject`: robots travel to deployment slots spread evenly on a
//!   circle around the object, caging it.
//! * `ApproachObject`: robots close in on the object center until every one
//!   touches it.
//! * `PushObject`: the team faces the goal and advances together; the front
//!   robot holds a small gap instead of pushing.
//! * `RotateObject`: the team orbits the object center and the object's
//!   heading follows the orbit.
//!
//! Losing formation in any contact phase sends the team back to
//! `ReachObject` with freshly laid out slots. Slots are also re-laid
//! whenever team membership changes.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Arena, ControllerParams, WorldConfig};
use crate::geometry::point_segment_distance;
use crate::ids::{ObjectId, RobotId, TaskId};
use crate::pose::{angle_diff, bearing, unit, Pose2D};
use crate::steering::{self, Limits, Obstacle};
use crate::world::{in_contact, ObjectState, RobotState, VelocityCommand, WorldState};

/// Heading error under which a robot counts as lined up for pushing or
/// orbiting.
const ALIGN_TOL: f64 = 8.0 * PI / 180.0;
/// Extra radius of the detour lane used to go around the object.
const LANE_OFFSET: f64 = 0.12;
/// Largest angular step along the detour lane per waypoint.
const LANE_STEP: f64 = 0.6;
const APPROACH_SPEED: f64 = 0.05;
const PUSH_LOOKAHEAD: f64 = 0.2;
const TRACK_GAIN: f64 = 1.0;
const GAP_GAIN: f64 = 1.0;
/// How far the object may trail the push reference before it pauses.
const REFERENCE_SLACK: f64 = 0.01;
/// Aligned ticks without progress after which a push is abandoned.
const STALL_TICKS: u32 = 30;
const ROTATE_GAIN: f64 = 0.5;
const RADIAL_GAIN: f64 = 4.0;
/// Free space demanded between a slot and any blocking body.
const SLOT_CLEARANCE: f64 = 0.02;
/// Ring rotations tried, in twelfths of the slot spacing, when slots are
/// blocked.
const RING_OFFSETS: [i32; 13] = [0, -1, 1, -2, 2, -3, 3, -4, 4, -5, 5, -6, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FsmState {
    ReachObject,
    ApproachObject,
    PushObject,
    RotateObject,
    Complete,
}

impl FsmState {
    /// The complete edge set of the machine.
    pub fn is_legal_transition(from: FsmState, to: FsmState) -> bool {
        use FsmState::*;
        matches!(
            (from, to),
            (ReachObject, ApproachObject)
                | (ApproachObject, PushObject)
                | (PushObject, RotateObject)
                | (RotateObject, Complete)
                | (ApproachObject, ReachObject)
                | (PushObject, ReachObject)
                | (RotateObject, ReachObject)
        )
    }

    /// Phases in which robots hold a formation around the object.
    pub fn is_contact_phase(&self) -> bool {
        matches!(
            self,
            FsmState::ApproachObject | FsmState::PushObject | FsmState::RotateObject
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            FsmState::ReachObject => "ReachObject",
            FsmState::ApproachObject => "ApproachObject",
            FsmState::PushObject => "PushObject",
            FsmState::RotateObject => "RotateObject",
            FsmState::Complete => "Complete",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FsmError {
    #[error("no deployment for an empty team")]
    EmptyTeam,
    #[error("{robots} robots cannot fill {slots} slots")]
    SizeMismatch { robots: usize, slots: usize },
    #[error("team robot {0} is not in the world")]
    RobotMissing(RobotId),
    #[error("task object {0} is not in the world")]
    ObjectMissing(ObjectId),
}

/// Radius of the deployment circle.
pub fn deploy_radius(object: &ObjectState, robot_radius: f64, params: &ControllerParams) -> f64 {
    object.radius + robot_radius + params.deploy_clearance
}

/// Bearing from the object to the goal position. Falls back to the goal
/// heading when the object already sits on the goal point.
pub fn goal_bearing(object: &ObjectState, goal: &Pose2D) -> f64 {
    let delta = goal.position() - object.position();
    if delta.norm() < 1e-9 {
        goal.theta
    } else {
        bearing(&delta)
    }
}

fn ring(center: Vector2<f64>, radius: f64, first_angle: f64, n: usize) -> Vec<Pose2D> {
    let spacing = TAU / n as f64;
    (0..n)
        .map(|i| {
            let angle = first_angle + spacing * i as f64;
            Pose2D::at(center + unit(angle) * radius, angle + PI)
        })
        .collect()
}

/// Evenly spaced deployment slots around the object.
///
/// Slot 0 sits diametrically opposite the goal direction; the rest follow
/// counter-clockwise at `2π / team_size` spacing. Every slot faces the
/// object center.
pub fn deployment_positions(
    object: &ObjectState,
    team_size: usize,
    robot_radius: f64,
    params: &ControllerParams,
    goal: &Pose2D,
) -> Result<Vec<Pose2D>, FsmError> {
    if team_size == 0 {
        return Err(FsmError::EmptyTeam);
    }
    let radius = deploy_radius(object, robot_radius, params);
    Ok(ring(
        object.position(),
        radius,
        goal_bearing(object, goal) + PI,
        team_size,
    ))
}

/// Like [`deployment_positions`], but rotates the whole ring by a fraction
/// of the slot spacing when a slot would land on a blocking body or
/// outside the arena. The unrotated ring is kept when nothing fits.
pub fn deployment_positions_avoiding(
    object: &ObjectState,
    team_size: usize,
    robot_radius: f64,
    params: &ControllerParams,
    goal: &Pose2D,
    blockers: &[Obstacle],
    arena: &Arena,
) -> Result<Vec<Pose2D>, FsmError> {
    let base = deployment_positions(object, team_size, robot_radius, params, goal)?;
    let radius = deploy_radius(object, robot_radius, params);
    let first = goal_bearing(object, goal) + PI;
    let spacing = TAU / team_size as f64;
    let free = |slots: &[Pose2D]| {
        slots.iter().all(|s| {
            let p = s.position();
            let inside = p.x - robot_radius >= arena.min_x
                && p.x + robot_radius <= arena.max_x
                && p.y - robot_radius >= arena.min_y
                && p.y + robot_radius <= arena.max_y;
            inside
                && blockers
                    .iter()
                    .all(|b| (p - b.center).norm() >= robot_radius + b.radius + SLOT_CLEARANCE)
        })
    };
    if free(&base) {
        return Ok(base);
    }
    for k in RING_OFFSETS.iter().skip(1) {
        let candidate = ring(
            object.position(),
            radius,
            first + spacing * (*k as f64) / 12.0,
            team_size,
        );
        if free(&candidate) {
            return Ok(candidate);
        }
    }
    Ok(base)
}

/// Greedy nearest-first matching of robots to slots.
///
/// Repeatedly takes the globally closest (robot, free slot) pair; ties go to
/// the smaller robot id, then the smaller slot index.
pub fn assign_slots(
    team: &[&RobotState],
    slots: &[Pose2D],
) -> Result<BTreeMap<RobotId, usize>, FsmError> {
    if team.len() != slots.len() {
        return Err(FsmError::SizeMismatch {
            robots: team.len(),
            slots: slots.len(),
        });
    }
    let mut pairs: Vec<(f64, RobotId, usize)> = Vec::with_capacity(team.len() * slots.len());
    for robot in team {
        for (i, slot) in slots.iter().enumerate() {
            pairs.push(((robot.position() - slot.position()).norm(), robot.id, i));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assignment = BTreeMap::new();
    let mut taken = vec![false; slots.len()];
    for (_, robot, slot) in pairs {
        if taken[slot] || assignment.contains_key(&robot) {
            continue;
        }
        taken[slot] = true;
        assignment.insert(robot, slot);
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
struct PushPlan {
    dir: Vector2<f64>,
    start: Vector2<f64>,
    length: f64,
    /// Distance the formation reference has advanced along `dir`.
    progress: f64,
    /// `progress` before this tick's advance.
    previous: f64,
    advancing: bool,
    offsets: BTreeMap<RobotId, Vector2<f64>>,
    front: Option<RobotId>,
    aligned: bool,
    /// Consecutive aligned ticks without the reference advancing.
    stalled: u32,
}

impl PushPlan {
    fn reference(&self) -> Vector2<f64> {
        self.start + self.dir * self.progress
    }

    /// Where the formation should be at the start of this tick.
    fn tracked(&self) -> Vector2<f64> {
        self.start + self.dir * self.previous
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RotatePlan {
    /// +1 counter-clockwise, -1 clockwise.
    sign: f64,
    radii: BTreeMap<RobotId, f64>,
    aligned: bool,
}

/// A recorded state change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: FsmState,
    pub to: FsmState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskController {
    task: TaskId,
    object: ObjectId,
    goal: Pose2D,
    state: FsmState,
    slots: Vec<Pose2D>,
    assignment: BTreeMap<RobotId, usize>,
    /// Object pose the current slots were laid out against.
    anchor: Pose2D,
    push: Option<PushPlan>,
    rotate: Option<RotatePlan>,
    params: ControllerParams,
    limits_v: f64,
    limits_omega: f64,
    dt: f64,
    robot_radius: f64,
}

impl TaskController {
    /// Starts a controller in `ReachObject` with slots laid out for `team`.
    pub fn new(
        task: TaskId,
        object: ObjectId,
        goal: Pose2D,
        params: ControllerParams,
        world_cfg: &WorldConfig,
        world: &WorldState,
        team: &[RobotId],
    ) -> Result<Self, FsmError> {
        let obj = world
            .object(object)
            .ok_or(FsmError::ObjectMissing(object))?;
        let mut ctrl = Self {
            task,
            object,
            goal,
            state: FsmState::ReachObject,
            slots: Vec::new(),
            assignment: BTreeMap::new(),
            anchor: obj.pose,
            push: None,
            rotate: None,
            params,
            limits_v: world_cfg.v_max,
            limits_omega: world_cfg.omega_max,
            dt: world_cfg.dt,
            robot_radius: world_cfg.robot_radius,
        };
        ctrl.layout(world, team)?;
        Ok(ctrl)
    }

    /// A controller for a goal the object already satisfies. It starts in
    /// `Complete` and never transitions.
    pub fn already_complete(mut self) -> Self {
        self.state = FsmState::Complete;
        self.slots.clear();
        self.assignment.clear();
        self
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn object(&self) -> ObjectId {
        self.object
    }

    pub fn goal(&self) -> Pose2D {
        self.goal
    }

    pub fn state(&self) -> FsmState {
        self.state
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn slots(&self) -> &[Pose2D] {
        &self.slots
    }

    pub fn assignment(&self) -> &BTreeMap<RobotId, usize> {
        &self.assignment
    }

    pub fn slot_of(&self, robot: RobotId) -> Option<usize> {
        self.assignment.get(&robot).copied()
    }

    /// Retargets the goal. The team goes back to deploying.
    pub fn set_goal(&mut self, goal: Pose2D) {
        self.goal = goal;
    }

    fn limits(&self) -> Limits {
        Limits {
            v_max: self.limits_v,
            omega_max: self.limits_omega,
        }
    }

    /// True when the object already meets both goal tolerances.
    pub fn goal_satisfied(&self, object: &ObjectState) -> bool {
        object.pose.distance_to(&self.goal) <= self.params.pos_tol
            && angle_diff(self.goal.theta, object.pose.theta).abs() <= self.params.ang_tol
    }

    /// Slot `index` carried along with the object's motion since layout.
    pub fn carried_slot(&self, object: &ObjectState, index: usize) -> Pose2D {
        let slot = self.slots[index];
        let turn = angle_diff(object.pose.theta, self.anchor.theta);
        let rel = Rotation2::new(turn) * (slot.position() - self.anchor.position());
        Pose2D::at(object.position() + rel, slot.theta + turn)
    }

    fn team_robots<'w>(
        &self,
        world: &'w WorldState,
        team: &[RobotId],
    ) -> Result<Vec<&'w RobotState>, FsmError> {
        team.iter()
            .map(|id| world.robot(*id).ok_or(FsmError::RobotMissing(*id)))
            .collect()
    }

    /// Lays out fresh slots for the current team and matches robots to them.
    fn layout(&mut self, world: &WorldState, team: &[RobotId]) -> Result<(), FsmError> {
        let object = world
            .object(self.object)
            .ok_or(FsmError::ObjectMissing(self.object))?;
        self.anchor = object.pose;
        self.push = None;
        self.rotate = None;
        if team.is_empty() {
            self.slots.clear();
            self.assignment.clear();
            return Ok(());
        }
        let mut blockers: Vec<Obstacle> = world
            .robots()
            .iter()
            .filter(|r| (r.failed || r.team.is_none()) && !team.contains(&r.id))
            .map(|r| Obstacle {
                center: r.position(),
                radius: r.body_radius,
            })
            .collect();
        blockers.extend(
            world
                .objects()
                .iter()
                .filter(|o| o.id != self.object)
                .map(|o| Obstacle {
                    center: o.position(),
                    radius: o.radius,
                }),
        );
        self.slots = deployment_positions_avoiding(
            object,
            team.len(),
            self.robot_radius,
            &self.params,
            &self.goal,
            &blockers,
            world.arena(),
        )?;
        let robots = self.team_robots(world, team)?;
        self.assignment = assign_slots(&robots, &self.slots)?;
        Ok(())
    }

    /// True iff some team robot is failed or frozen, or strays further than
    /// `formation_tol` from its carried slot.
    pub fn formation_broken(&self, object: &ObjectState, team: &[&RobotState]) -> bool {
        team.iter().any(|robot| {
            if robot.failed || robot.frozen {
                return true;
            }
            match self.assignment.get(&robot.id) {
                Some(&slot) if slot < self.slots.len() => {
                    let carried = self.carried_slot(object, slot);
                    (robot.position() - carried.position()).norm() > self.params.formation_tol
                }
                _ => true,
            }
        })
    }

    /// The state the machine should be in given the current world.
    pub fn fsm_transition(
        &self,
        world: &WorldState,
        team: &[RobotId],
    ) -> Result<FsmState, FsmError> {
        if self.state == FsmState::Complete {
            return Ok(FsmState::Complete);
        }
        let object = world
            .object(self.object)
            .ok_or(FsmError::ObjectMissing(self.object))?;
        let robots = self.team_robots(world, team)?;
        if robots.is_empty() {
            return Ok(FsmState::ReachObject);
        }
        if self.state.is_contact_phase() && self.formation_broken(object, &robots) {
            return Ok(FsmState::ReachObject);
        }
        let p = &self.params;
        let next = match self.state {
            FsmState::ReachObject => {
                let arrived = robots.iter().all(|r| match self.assignment.get(&r.id) {
                    Some(&slot) => {
                        (r.position() - self.carried_slot(object, slot).position()).norm()
                            <= p.slot_tol
                    }
                    None => false,
                });
                if arrived {
                    FsmState::ApproachObject
                } else {
                    FsmState::ReachObject
                }
            }
            FsmState::ApproachObject => {
                if robots.iter().all(|r| in_contact(r, object, p.contact_tol)) {
                    FsmState::PushObject
                } else {
                    FsmState::ApproachObject
                }
            }
            FsmState::PushObject => {
                let stalled = self
                    .push
                    .as_ref()
                    .is_some_and(|plan| plan.stalled >= STALL_TICKS);
                if object.pose.distance_to(&self.goal) <= p.pos_tol {
                    FsmState::RotateObject
                } else if stalled {
                    // spent or deadlocked short of the goal: lay out afresh
                    FsmState::ReachObject
                } else {
                    FsmState::PushObject
                }
            }
            FsmState::RotateObject => {
                let pos_err = object.pose.distance_to(&self.goal);
                if pos_err > p.pos_tol {
                    // the object slipped out of the goal disc: redeploy
                    FsmState::ReachObject
                } else if angle_diff(self.goal.theta, object.pose.theta).abs() <= p.ang_tol {
                    FsmState::Complete
                } else {
                    FsmState::RotateObject
                }
            }
            FsmState::Complete => FsmState::Complete,
        };
        Ok(next)
    }

    fn enter(
        &mut self,
        next: FsmState,
        world: &WorldState,
        team: &[RobotId],
    ) -> Result<(), FsmError> {
        let object = world
            .object(self.object)
            .ok_or(FsmError::ObjectMissing(self.object))?
            .clone();
        match next {
            FsmState::ReachObject => self.layout(world, team)?,
            FsmState::ApproachObject | FsmState::Complete => {}
            FsmState::PushObject => {
                let robots = self.team_robots(world, team)?;
                let delta = self.goal.position() - object.position();
                let length = delta.norm();
                let dir = if length > 1e-9 {
                    delta / length
                } else {
                    unit(self.goal.theta)
                };
                let dir_bearing = bearing(&dir);
                let mut front: Option<(f64, usize, RobotId)> = None;
                for r in &robots {
                    if let Some(&slot) = self.assignment.get(&r.id) {
                        let s = self.carried_slot(&object, slot).position() - object.position();
                        let off = angle_diff(bearing(&s), dir_bearing).abs();
                        let better = match front {
                            None => true,
                            Some((best, best_slot, _)) => {
                                off < best - 1e-12
                                    || ((off - best).abs() <= 1e-12 && slot < best_slot)
                            }
                        };
                        if better {
                            front = Some((off, slot, r.id));
                        }
                    }
                }
                // a lone robot pushes; it never plays the front role
                let front = if robots.len() > 1 {
                    front.map(|f| f.2)
                } else {
                    None
                };
                self.push = Some(PushPlan {
                    dir,
                    start: object.position(),
                    length,
                    progress: 0.0,
                    previous: 0.0,
                    advancing: false,
                    offsets: robots
                        .iter()
                        .map(|r| (r.id, r.position() - object.position()))
                        .collect(),
                    front,
                    aligned: false,
                    stalled: 0,
                });
            }
            FsmState::RotateObject => {
                let robots = self.team_robots(world, team)?;
                let err = angle_diff(self.goal.theta, object.pose.theta);
                let floor = object.radius + self.robot_radius + self.params.contact_tol / 2.0;
                self.rotate = Some(RotatePlan {
                    sign: if err < 0.0 { -1.0 } else { 1.0 },
                    radii: robots
                        .iter()
                        .map(|r| (r.id, (r.position() - object.position()).norm().max(floor)))
                        .collect(),
                    aligned: false,
                });
            }
        }
        self.state = next;
        Ok(())
    }

    /// Runs the transition check (chaining through states whose exit
    /// condition already holds) and the per-tick bookkeeping of the current
    /// phase. Returns the transitions taken.
    pub fn update(
        &mut self,
        world: &WorldState,
        team: &[RobotId],
    ) -> Result<Vec<Transition>, FsmError> {
        let mut taken = Vec::new();
        for _ in 0..4 {
            let next = self.fsm_transition(world, team)?;
            if next == self.state {
                break;
            }
            taken.push(Transition {
                from: self.state,
                to: next,
            });
            self.enter(next, world, team)?;
            if next == FsmState::ReachObject {
                break;
            }
        }
        self.bookkeeping(world, team)?;
        Ok(taken)
    }

    fn bookkeeping(&mut self, world: &WorldState, team: &[RobotId]) -> Result<(), FsmError> {
        let object = world
            .object(self.object)
            .ok_or(FsmError::ObjectMissing(self.object))?
            .clone();
        let robots = self.team_robots(world, team)?;
        match self.state {
            FsmState::PushObject => {
                let dt = self.dt;
                let speed = self.params.push_speed;
                if let Some(plan) = self.push.as_mut() {
                    if !plan.aligned {
                        let heading = bearing(&plan.dir);
                        plan.aligned = robots
                            .iter()
                            .all(|r| angle_diff(heading, r.pose.theta).abs() <= ALIGN_TOL);
                    }
                    plan.advancing = false;
                    plan.previous = plan.progress;
                    if plan.aligned && plan.progress < plan.length {
                        let lead = (object.position() - plan.reference()).dot(&plan.dir);
                        if lead >= -REFERENCE_SLACK {
                            plan.progress = (plan.progress + speed * dt).min(plan.length);
                            plan.advancing = true;
                        }
                    }
                    if plan.aligned && !plan.advancing {
                        plan.stalled += 1;
                    } else {
                        plan.stalled = 0;
                    }
                }
            }
            FsmState::RotateObject => {
                let err = angle_diff(self.goal.theta, object.pose.theta);
                let ang_tol = self.params.ang_tol;
                if let Some(plan) = self.rotate.as_mut() {
                    if err * plan.sign < 0.0 && err.abs() > ang_tol {
                        plan.sign = -plan.sign;
                        plan.aligned = false;
                    }
                    if !plan.aligned {
                        plan.aligned = robots.iter().all(|r| {
                            let heading = tangent_heading(
                                r,
                                &object,
                                plan.sign,
                                plan.radii.get(&r.id).copied(),
                            );
                            angle_diff(heading, r.pose.theta).abs() <= ALIGN_TOL
                        });
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Re-lays slots after a membership change. Contact phases fall back to
    /// `ReachObject`.
    pub fn on_team_changed(
        &mut self,
        world: &WorldState,
        team: &[RobotId],
    ) -> Result<Option<Transition>, FsmError> {
        if self.state == FsmState::Complete {
            return Ok(None);
        }
        let from = self.state;
        self.layout(world, team)?;
        if from.is_contact_phase() {
            self.state = FsmState::ReachObject;
            return Ok(Some(Transition {
                from,
                to: FsmState::ReachObject,
            }));
        }
        Ok(None)
    }

    /// Per-robot velocity commands for this tick. Frozen and failed robots
    /// get zero.
    pub fn robot_commands(
        &self,
        world: &WorldState,
        team: &[RobotId],
    ) -> Result<BTreeMap<RobotId, VelocityCommand>, FsmError> {
        let object = world
            .object(self.object)
            .ok_or(FsmError::ObjectMissing(self.object))?;
        let robots = self.team_robots(world, team)?;
        let mut out = BTreeMap::new();
        for robot in &robots {
            let cmd = if robot.frozen || robot.failed {
                VelocityCommand::ZERO
            } else {
                match self.state {
                    FsmState::ReachObject => self.reach_command(world, object, robot),
                    FsmState::ApproachObject => self.approach_command(object, robot),
                    FsmState::PushObject => self.push_command(object, robot),
                    FsmState::RotateObject => self.rotate_command(object, robot),
                    FsmState::Complete => VelocityCommand::ZERO,
                }
            };
            out.insert(robot.id, cmd);
        }
        Ok(out)
    }

    fn reach_command(
        &self,
        world: &WorldState,
        object: &ObjectState,
        robot: &RobotState,
    ) -> VelocityCommand {
        let Some(&slot) = self.assignment.get(&robot.id) else {
            return VelocityCommand::ZERO;
        };
        let target = self.carried_slot(object, slot).position();
        let p = robot.position();
        let c = object.position();
        let keep_out = object.radius + robot.body_radius + self.params.deploy_clearance / 2.0;
        let waypoint = if point_segment_distance(&c, &p, &target) < keep_out {
            let lane = (target - c).norm() + LANE_OFFSET;
            let here = bearing(&(p - c));
            let delta = angle_diff(bearing(&(target - c)), here);
            let step = delta.abs().min(LANE_STEP) * delta.signum();
            c + unit(here + step) * lane
        } else {
            target
        };
        let obstacles: Vec<Obstacle> = world
            .robots()
            .iter()
            .filter(|r| r.id != robot.id)
            .map(|r| Obstacle {
                center: r.position(),
                radius: r.body_radius,
            })
            .chain(
                world
                    .objects()
                    .iter()
                    .filter(|o| o.id != self.object)
                    .map(|o| Obstacle {
                        center: o.position(),
                        radius: o.radius,
                    }),
            )
            .collect();
        steering::navigate(
            &robot.pose,
            robot.body_radius,
            waypoint,
            target,
            self.params.slot_tol / 2.0,
            self.limits_v,
            &obstacles,
            &self.limits(),
        )
    }

    fn approach_command(&self, object: &ObjectState, robot: &RobotState) -> VelocityCommand {
        let delta = object.position() - robot.position();
        let gap = delta.norm() - robot.body_radius - object.radius;
        if gap <= self.params.contact_tol / 2.0 {
            return VelocityCommand::ZERO;
        }
        let speed = APPROACH_SPEED.min(0.5 * gap / self.dt);
        steering::turn_then_drive(&robot.pose, bearing(&delta), speed, &self.limits())
    }

    fn push_command(&self, object: &ObjectState, robot: &RobotState) -> VelocityCommand {
        let Some(plan) = &self.push else {
            return VelocityCommand::ZERO;
        };
        let limits = self.limits();
        let heading = bearing(&plan.dir);
        if !plan.aligned {
            return steering::rotate_toward(&robot.pose, heading, &limits);
        }
        let offset = plan
            .offsets
            .get(&robot.id)
            .copied()
            .unwrap_or_else(|| robot.position() - object.position());
        let reference = plan.tracked() + offset;
        let aim = reference + plan.dir * PUSH_LOOKAHEAD - robot.position();
        let feedforward = if plan.advancing {
            self.params.push_speed
        } else {
            0.0
        };
        let speed = if plan.front == Some(robot.id) {
            let standoff = object.radius + robot.body_radius + self.params.front_gap;
            let distance = (robot.position() - object.position()).norm();
            feedforward + GAP_GAIN * (standoff - distance)
        } else {
            feedforward + TRACK_GAIN * (reference - robot.position()).dot(&plan.dir)
        };
        let cmd = steering::turn_then_drive(&robot.pose, bearing(&aim), speed.max(0.0), &limits);
        if speed <= 0.0 {
            VelocityCommand::new(0.0, cmd.omega)
        } else {
            cmd
        }
    }

    fn rotate_command(&self, object: &ObjectState, robot: &RobotState) -> VelocityCommand {
        let Some(plan) = &self.rotate else {
            return VelocityCommand::ZERO;
        };
        let limits = self.limits();
        let radius_ref = plan.radii.get(&robot.id).copied();
        let heading = tangent_heading(robot, object, plan.sign, radius_ref);
        if !plan.aligned {
            return steering::rotate_toward(&robot.pose, heading, &limits);
        }
        let err = angle_diff(self.goal.theta, object.pose.theta);
        if err * plan.sign <= 0.0 {
            return VelocityCommand::ZERO;
        }
        let orbit = self.params.orbit_speed.min(ROTATE_GAIN * err.abs());
        let radius = radius_ref.unwrap_or_else(|| (robot.position() - object.position()).norm());
        let omega =
            plan.sign * orbit + steering::HEADING_GAIN * angle_diff(heading, robot.pose.theta);
        VelocityCommand::new(radius * orbit, omega).clamped(limits.v_max, limits.omega_max)
    }

    /// Couples the object heading to the team's orbit: the object turns by
    /// the mean angular displacement of the team around its center.
    pub fn couple_rotation(&self, before: &WorldState, after: &mut WorldState, team: &[RobotId]) {
        if self.state != FsmState::RotateObject {
            return;
        }
        let Some(plan) = &self.rotate else { return };
        if !plan.aligned {
            return;
        }
        let (Some(obj_before), Some(obj_after)) =
            (before.object(self.object), after.object(self.object))
        else {
            return;
        };
        let mut total = 0.0;
        let mut count = 0usize;
        for id in team {
            let (Some(rb), Some(ra)) = (before.robot(*id), after.robot(*id)) else {
                continue;
            };
            if ra.failed || ra.frozen {
                return;
            }
            let a0 = bearing(&(rb.position() - obj_before.position()));
            let a1 = bearing(&(ra.position() - obj_after.position()));
            total += angle_diff(a1, a0);
            count += 1;
        }
        if count == 0 {
            return;
        }
        let turn = total / count as f64;
        if let Some(obj) = after.object_mut(self.object) {
            obj.pose = Pose2D::new(obj.pose.x, obj.pose.y, obj.pose.theta + turn);
        }
    }
}

/// Orbit heading for a robot circling the object, with a small correction
/// pulling it back to its reference radius.
fn tangent_heading(
    robot: &RobotState,
    object: &ObjectState,
    sign: f64,
    radius_ref: Option<f64>,
) -> f64 {
    let rel = robot.position() - object.position();
    let radius = rel.norm();
    let correction = radius_ref
        .map(|r| (RADIAL_GAIN * (radius - r)).atan())
        .unwrap_or(0.0);
    bearing(&rel) + sign * (FRAC_PI_2 + correction)
}
