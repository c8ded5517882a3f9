//! World state and the fixed-step physics: unicycle robots, disc objects,
//! quasi-static pushing.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Arena, WorldConfig};
use crate::ids::{ObjectId, RobotId, TaskId};
use crate::pose::{wrap_angle, Pose2D};

/// Below this center distance two discs count as concentric.
const CONCENTRIC_EPS: f64 = 1e-12;
/// Turn rates smaller than this integrate as straight lines.
const STRAIGHT_OMEGA_EPS: f64 = 1e-9;
const SEPARATION_PASSES: usize = 4;
const EJECTION_PASSES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("duplicate robot {0}")]
    DuplicateRobot(RobotId),
    #[error("duplicate object {0}")]
    DuplicateObject(ObjectId),
    #[error("{0} placed outside the arena")]
    OutsideArena(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("timestep must be positive, got {0}")]
    InvalidTimestep(f64),
    #[error("object {id} radius {radius} must exceed robot radius {robot_radius}")]
    ObjectTooSmall {
        id: ObjectId,
        radius: f64,
        robot_radius: f64,
    },
    #[error("invalid body size: {0}")]
    InvalidSize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// m/s
    pub v: f64,
    /// rad/s
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_zero(&self) -> bool {
        self.v == 0.0 && self.omega == 0.0
    }

    pub fn clamped(&self, v_max: f64, omega_max: f64) -> Self {
        Self {
            v: self.v.clamp(-v_max, v_max),
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub pose: Pose2D,
    pub body_radius: f64,
    /// Command applied during the last step.
    pub cmd: VelocityCommand,
    pub team: Option<TaskId>,
    pub frozen: bool,
    pub failed: bool,
    pub slot_index: Option<usize>,
}

impl RobotState {
    pub fn new(id: RobotId, pose: Pose2D, body_radius: f64) -> Self {
        Self {
            id,
            pose,
            body_radius,
            cmd: VelocityCommand::ZERO,
            team: None,
            frozen: false,
            failed: false,
            slot_index: None,
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        self.pose.position()
    }

    /// Frozen and failed robots are never displaced, not even by collisions.
    pub fn is_immovable(&self) -> bool {
        self.frozen || self.failed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: ObjectId,
    pub pose: Pose2D,
    pub radius: f64,
    /// Team size needed before transport may start.
    pub min_robots: usize,
}

impl ObjectState {
    pub fn new(id: ObjectId, pose: Pose2D, radius: f64, min_robots: usize) -> Self {
        Self {
            id,
            pose,
            radius,
            min_robots,
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        self.pose.position()
    }
}

/// Exact unicycle update over `dt`.
///
/// Straight-line advance when `omega` is zero, otherwise an arc of radius
/// `v / omega`. Velocity limits are the caller's business; `WorldState::step`
/// clamps before integrating.
pub fn integrate_unicycle(pose: Pose2D, v: f64, omega: f64, dt: f64) -> Result<Pose2D, WorldError> {
    if !pose.is_finite() {
        return Err(WorldError::NonFinite("pose"));
    }
    if !v.is_finite() || !omega.is_finite() {
        return Err(WorldError::NonFinite("velocity command"));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(WorldError::InvalidTimestep(dt));
    }
    let theta = pose.theta;
    if omega.abs() < STRAIGHT_OMEGA_EPS {
        return Ok(Pose2D::new(
            pose.x + v * dt * theta.cos(),
            pose.y + v * dt * theta.sin(),
            theta + omega * dt,
        ));
    }
    let r = v / omega;
    let theta_end = theta + omega * dt;
    Ok(Pose2D::new(
        pose.x + r * (theta_end.sin() - theta.sin()),
        pose.y - r * (theta_end.cos() - theta.cos()),
        wrap_angle(theta_end),
    ))
}

/// True iff the robot disc is within `tol` of touching the object disc.
pub fn in_contact(robot: &RobotState, object: &ObjectState, tol: f64) -> bool {
    let distance = (robot.position() - object.position()).norm();
    distance <= robot.body_radius + object.radius + tol
}

/// Penetration depth of a robot into an object (positive when overlapping).
pub fn overlap_depth(robot: &RobotState, object: &ObjectState) -> f64 {
    robot.body_radius + object.radius - (robot.position() - object.position()).norm()
}

/// Quasi-static push: translates the object out of every overlapping robot.
///
/// Each overlap contributes a de-penetration vector along the robot-to-object
/// center line; contributions are summed. Heading is left untouched. A robot
/// sitting exactly on the object center pushes along +x.
pub fn resolve_push<'a>(
    object: &ObjectState,
    robots: impl IntoIterator<Item = &'a RobotState>,
) -> Pose2D {
    let center = object.position();
    let mut shift = Vector2::zeros();
    for robot in robots {
        let delta = center - robot.position();
        let distance = delta.norm();
        let overlap = robot.body_radius + object.radius - distance;
        if overlap <= 0.0 {
            continue;
        }
        if distance > CONCENTRIC_EPS {
            shift += delta * (overlap / distance);
        } else {
            shift.x += overlap;
        }
    }
    if shift == Vector2::zeros() {
        return object.pose;
    }
    object.pose.with_position(center + shift)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    robots: Vec<RobotState>,
    objects: Vec<ObjectState>,
    arena: Arena,
    time: f64,
    tick: u64,
}

impl WorldState {
    pub fn new(arena: Arena) -> Self {
        Self {
            robots: Vec::new(),
            objects: Vec::new(),
            arena,
            time: 0.0,
            tick: 0,
        }
    }

    pub fn add_robot(&mut self, robot: RobotState) -> Result<(), WorldError> {
        if self.robot(robot.id).is_some() {
            return Err(WorldError::DuplicateRobot(robot.id));
        }
        if !robot.pose.is_finite() {
            return Err(WorldError::NonFinite("robot pose"));
        }
        if robot.body_radius.is_nan() || robot.body_radius <= 0.0 {
            return Err(WorldError::InvalidSize(format!("{} radius", robot.id)));
        }
        if !self.arena.contains(robot.pose.x, robot.pose.y) {
            return Err(WorldError::OutsideArena(robot.id.to_string()));
        }
        if let Some(small) = self.objects.iter().find(|o| o.radius <= robot.body_radius) {
            return Err(WorldError::ObjectTooSmall {
                id: small.id,
                radius: small.radius,
                robot_radius: robot.body_radius,
            });
        }
        self.robots.push(robot);
        self.robots.sort_by_key(|r| r.id);
        Ok(())
    }

    pub fn add_object(&mut self, object: ObjectState) -> Result<(), WorldError> {
        if self.object(object.id).is_some() {
            return Err(WorldError::DuplicateObject(object.id));
        }
        if !object.pose.is_finite() {
            return Err(WorldError::NonFinite("object pose"));
        }
        if object.min_robots == 0 {
            return Err(WorldError::InvalidSize(format!(
                "{} needs min_robots >= 1",
                object.id
            )));
        }
        let largest_robot = self
            .robots
            .iter()
            .map(|r| r.body_radius)
            .fold(0.0, f64::max);
        if object.radius.is_nan() || object.radius <= largest_robot || object.radius <= 0.0 {
            return Err(WorldError::ObjectTooSmall {
                id: object.id,
                radius: object.radius,
                robot_radius: largest_robot,
            });
        }
        if !self.arena.contains(object.pose.x, object.pose.y) {
            return Err(WorldError::OutsideArena(object.id.to_string()));
        }
        self.objects.push(object);
        self.objects.sort_by_key(|o| o.id);
        Ok(())
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn objects(&self) -> &[ObjectState] {
        &self.objects
    }

    pub fn robot(&self, id: RobotId) -> Option<&RobotState> {
        self.robots
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.robots[i])
    }

    pub fn robot_mut(&mut self, id: RobotId) -> Option<&mut RobotState> {
        self.robots
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &mut self.robots[i])
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectState> {
        self.objects
            .binary_search_by_key(&id, |o| o.id)
            .ok()
            .map(|i| &self.objects[i])
    }

    pub fn object_mut(&mut self, id: ObjectId) -> Option<&mut ObjectState> {
        self.objects
            .binary_search_by_key(&id, |o| o.id)
            .ok()
            .map(|i| &mut self.objects[i])
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Advances one fixed step and returns the successor state.
    ///
    /// Commands for frozen or failed robots are zeroed, the rest clamped to
    /// the configured limits. Robots without a command stand still. A
    /// command naming an unknown robot rejects the whole step.
    pub fn step(
        &self,
        cfg: &WorldConfig,
        commands: &BTreeMap<RobotId, VelocityCommand>,
    ) -> Result<WorldState, WorldError> {
        let mut next = self.clone();
        next.advance(cfg, commands)?;
        Ok(next)
    }

    /// In-place variant of [`WorldState::step`]. On error the state is
    /// unchanged.
    pub fn advance(
        &mut self,
        cfg: &WorldConfig,
        commands: &BTreeMap<RobotId, VelocityCommand>,
    ) -> Result<(), WorldError> {
        if !cfg.dt.is_finite() || cfg.dt <= 0.0 {
            return Err(WorldError::InvalidTimestep(cfg.dt));
        }
        for (id, cmd) in commands {
            if self.robot(*id).is_none() {
                return Err(WorldError::UnknownRobot(*id));
            }
            if !cmd.v.is_finite() || !cmd.omega.is_finite() {
                return Err(WorldError::NonFinite("velocity command"));
            }
        }

        let mut integrated = Vec::with_capacity(self.robots.len());
        for robot in &self.robots {
            let cmd = if robot.is_immovable() {
                VelocityCommand::ZERO
            } else {
                commands
                    .get(&robot.id)
                    .copied()
                    .unwrap_or_default()
                    .clamped(cfg.v_max, cfg.omega_max)
            };
            let pose = integrate_unicycle(robot.pose, cmd.v, cmd.omega, cfg.dt)?;
            integrated.push((cmd, pose));
        }
        for (robot, (cmd, pose)) in self.robots.iter_mut().zip(integrated) {
            robot.cmd = cmd;
            robot.pose = pose;
        }

        self.separate_robots();
        for i in 0..self.objects.len() {
            let pushed = resolve_push(&self.objects[i], &self.robots);
            let object = &mut self.objects[i];
            let (x, y) = self.arena.clamp_disc(pushed.x, pushed.y, object.radius);
            object.pose = Pose2D::new(x, y, pushed.theta);
        }
        self.eject_robots();
        for robot in &mut self.robots {
            if robot.is_immovable() {
                continue;
            }
            let (x, y) = self
                .arena
                .clamp_disc(robot.pose.x, robot.pose.y, robot.body_radius);
            robot.pose = Pose2D::new(x, y, robot.pose.theta);
        }

        self.tick += 1;
        self.time = self.tick as f64 * cfg.dt;
        Ok(())
    }

    /// Symmetric positional separation of overlapping robots. An immovable
    /// robot leaves the whole correction to the other one.
    fn separate_robots(&mut self) {
        let n = self.robots.len();
        for _ in 0..SEPARATION_PASSES {
            let mut moved = false;
            for i in 0..n {
                for j in (i + 1)..n {
                    let (a, b) = (&self.robots[i], &self.robots[j]);
                    let delta = b.position() - a.position();
                    let distance = delta.norm();
                    let overlap = a.body_radius + b.body_radius - distance;
                    if overlap <= 0.0 {
                        continue;
                    }
                    let dir = if distance > CONCENTRIC_EPS {
                        delta / distance
                    } else {
                        Vector2::new(1.0, 0.0)
                    };
                    let (share_a, share_b) = match (a.is_immovable(), b.is_immovable()) {
                        (false, false) => (0.5, 0.5),
                        (true, false) => (0.0, 1.0),
                        (false, true) => (1.0, 0.0),
                        (true, true) => continue,
                    };
                    let pa = a.position() - dir * (overlap * share_a);
                    let pb = b.position() + dir * (overlap * share_b);
                    let ra = &mut self.robots[i];
                    ra.pose = ra.pose.with_position(pa);
                    let rb = &mut self.robots[j];
                    rb.pose = rb.pose.with_position(pb);
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    /// Clears residual robot-object overlap left by multi-contact pushes.
    /// Mobile robots back out; an immovable robot shoves the object instead.
    fn eject_robots(&mut self) {
        for _ in 0..EJECTION_PASSES {
            let mut moved = false;
            for robot in &mut self.robots {
                for object in &mut self.objects {
                    let delta = robot.position() - object.position();
                    let distance = delta.norm();
                    let overlap = robot.body_radius + object.radius - distance;
                    if overlap <= 0.0 {
                        continue;
                    }
                    let dir = if distance > CONCENTRIC_EPS {
                        delta / distance
                    } else {
                        Vector2::new(-1.0, 0.0)
                    };
                    if robot.is_immovable() {
                        let p = object.position() - dir * overlap;
                        object.pose = object.pose.with_position(p);
                    } else {
                        let p = robot.position() + dir * overlap;
                        robot.pose = robot.pose.with_position(p);
                    }
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }

    /// Largest robot-object penetration depth in the world (0 if none).
    pub fn max_penetration(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for robot in &self.robots {
            for object in &self.objects {
                worst = worst.max(overlap_depth(robot, object));
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};

    fn robot_at(id: u32, x: f64, y: f64, theta: f64) -> RobotState {
        RobotState::new(RobotId(id), Pose2D::new(x, y, theta), 0.085)
    }

    fn disc(x: f64, y: f64) -> ObjectState {
        ObjectState::new(ObjectId(1), Pose2D::new(x, y, 0.0), 0.15, 1)
    }

    /// Forward Euler with `substeps` slices of `dt`.
    fn euler(pose: Pose2D, v: f64, omega: f64, dt: f64, substeps: usize) -> Pose2D {
        let h = dt / substeps as f64;
        let (mut x, mut y, mut th) = (pose.x, pose.y, pose.theta);
        for _ in 0..substeps {
            x += v * th.cos() * h;
            y += v * th.sin() * h;
            th += omega * h;
        }
        Pose2D::new(x, y, th)
    }

    #[test]
    fn zero_command_is_identity() {
        let p = integrate_unicycle(Pose2D::default(), 0.0, 0.0, 0.1).unwrap();
        assert_eq!(p, Pose2D::default());
    }

    #[test]
    fn straight_line() {
        let p = integrate_unicycle(Pose2D::default(), 1.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(p.x, 2.0);
        assert_relative_eq!(p.y, 0.0);
        assert_relative_eq!(p.theta, 0.0);
    }

    #[test]
    fn quarter_arc_matches_closed_form_and_euler() {
        // radius 2/pi quarter turn: (2/pi, 2/pi)
        let p = integrate_unicycle(Pose2D::default(), 1.0, FRAC_PI_2, 1.0).unwrap();
        let oracle = euler(Pose2D::default(), 1.0, FRAC_PI_2, 1.0, 10_000);
        assert_relative_eq!(p.x, FRAC_2_PI, epsilon = 1e-12);
        assert_relative_eq!(p.y, FRAC_2_PI, epsilon = 1e-12);
        assert_relative_eq!(p.theta, FRAC_PI_2, epsilon = 1e-12);
        assert!((p.x - oracle.x).abs() < 1e-3 && (p.y - oracle.y).abs() < 1e-3);

        // v = omega = pi/2 is a unit-radius quarter circle
        let q = integrate_unicycle(Pose2D::default(), FRAC_PI_2, FRAC_PI_2, 1.0).unwrap();
        let oracle = euler(Pose2D::default(), FRAC_PI_2, FRAC_PI_2, 1.0, 10_000);
        assert_relative_eq!(q.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 1.0, epsilon = 1e-12);
        assert!((q.x - oracle.x).abs() < 1e-3 && (q.y - oracle.y).abs() < 1e-3);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(integrate_unicycle(Pose2D::default(), f64::NAN, 0.0, 0.1).is_err());
        assert!(integrate_unicycle(Pose2D::default(), 0.1, f64::INFINITY, 0.1).is_err());
        assert!(integrate_unicycle(Pose2D::default(), 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn contact_boundaries() {
        let object = disc(0.0, 0.0);
        let tol = 0.01;
        let touching = robot_at(1, 0.235, 0.0, 0.0);
        let beyond = robot_at(2, 0.235 + 2.0 * tol, 0.0, 0.0);
        let within = robot_at(3, 0.0, -(0.235 + tol / 2.0), 0.0);
        assert!(in_contact(&touching, &object, tol));
        assert!(!in_contact(&beyond, &object, tol));
        assert!(in_contact(&within, &object, tol));
    }

    #[test]
    fn push_without_overlap_is_noop() {
        let object = disc(0.3, -0.2);
        let robots = [robot_at(1, 1.0, 1.0, 0.0), robot_at(2, 0.3, 0.2, 0.0)];
        assert_eq!(resolve_push(&object, &robots), object.pose);
    }

    #[test]
    fn single_contact_from_below() {
        let d = 0.01;
        let object = ObjectState::new(ObjectId(1), Pose2D::new(0.0, 0.0, 0.7), 0.15, 1);
        let robot = robot_at(1, 0.0, -(0.235 - d), FRAC_PI_2);
        let p = resolve_push(&object, [&robot]);
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.y, d, epsilon = 1e-12);
        assert_eq!(p.theta, 0.7);
    }

    /// Smallest +x translation that clears both robots, by fine scan.
    fn brute_force_clearing_shift(object: &ObjectState, robots: &[RobotState]) -> f64 {
        let step = 1e-7;
        let mut t = 0.0;
        loop {
            let c = object.position() + Vector2::new(t, 0.0);
            let clear = robots
                .iter()
                .all(|r| (c - r.position()).norm() >= r.body_radius + object.radius);
            if clear {
                return t;
            }
            t += step;
        }
    }

    #[test]
    fn two_contacts_at_45_degrees_sum() {
        let d = 1e-3;
        let object = disc(0.0, 0.0);
        let dist = 0.235 - d;
        let robots = [
            robot_at(
                1,
                dist * (PI - FRAC_PI_4).cos(),
                dist * (PI - FRAC_PI_4).sin(),
                0.0,
            ),
            robot_at(
                2,
                dist * (PI + FRAC_PI_4).cos(),
                dist * (PI + FRAC_PI_4).sin(),
                0.0,
            ),
        ];
        let p = resolve_push(&object, &robots);
        assert_relative_eq!(p.x, d * 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        // the summed vector agrees with exact clearance to first order in d
        let exact = brute_force_clearing_shift(&object, &robots);
        assert!((p.x - exact).abs() < 1e-5, "sum {} exact {}", p.x, exact);
    }

    #[test]
    fn concentric_pushes_along_x() {
        let object = disc(0.5, 0.5);
        let robot = robot_at(1, 0.5, 0.5, 0.0);
        let p = resolve_push(&object, [&robot]);
        assert_relative_eq!(p.x, 0.5 + 0.235);
        assert_relative_eq!(p.y, 0.5);
    }

    fn world_with(robots: Vec<RobotState>, objects: Vec<ObjectState>) -> WorldState {
        let mut w = WorldState::new(Arena::default());
        for o in objects {
            w.add_object(o).unwrap();
        }
        for r in robots {
            w.add_robot(r).unwrap();
        }
        w
    }

    #[test]
    fn empty_world_only_advances_time() {
        let cfg = WorldConfig::default();
        let w = WorldState::new(Arena::default());
        let next = w.step(&cfg, &BTreeMap::new()).unwrap();
        assert_eq!(next.tick(), 1);
        assert_relative_eq!(next.time(), 0.1);
        assert!(next.robots().is_empty() && next.objects().is_empty());
    }

    #[test]
    fn ten_straight_steps() {
        let cfg = WorldConfig::default();
        let mut w = world_with(vec![robot_at(1, 0.0, 0.0, 0.0)], vec![]);
        let cmds = BTreeMap::from([(RobotId(1), VelocityCommand::new(0.1, 0.0))]);
        for _ in 0..10 {
            w = w.step(&cfg, &cmds).unwrap();
        }
        assert_relative_eq!(w.robots()[0].pose.x, 0.1, epsilon = 1e-12);
        assert_relative_eq!(w.time(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unknown_robot_rejects_step() {
        let cfg = WorldConfig::default();
        let w = world_with(vec![robot_at(1, 0.0, 0.0, 0.0)], vec![]);
        let cmds = BTreeMap::from([(RobotId(9), VelocityCommand::new(0.1, 0.0))]);
        assert_eq!(
            w.step(&cfg, &cmds).unwrap_err(),
            WorldError::UnknownRobot(RobotId(9))
        );
    }

    #[test]
    fn commands_are_clamped_and_frozen_robots_hold() {
        let cfg = WorldConfig::default();
        let mut frozen = robot_at(2, 1.0, 0.0, 0.0);
        frozen.frozen = true;
        let w = world_with(vec![robot_at(1, 0.0, 0.0, 0.0), frozen], vec![]);
        let cmds = BTreeMap::from([
            (RobotId(1), VelocityCommand::new(5.0, 9.0)),
            (RobotId(2), VelocityCommand::new(0.1, 0.0)),
        ]);
        let next = w.step(&cfg, &cmds).unwrap();
        assert_eq!(next.robots()[0].cmd, VelocityCommand::new(0.15, 1.5));
        assert_eq!(next.robots()[1].pose, w.robots()[1].pose);
        assert!(next.robots()[1].cmd.is_zero());
    }

    #[test]
    fn robots_separate_symmetrically() {
        let cfg = WorldConfig::default();
        let w = world_with(
            vec![robot_at(1, 0.0, 0.0, 0.0), robot_at(2, 0.15, 0.0, 0.0)],
            vec![],
        );
        let next = w.step(&cfg, &BTreeMap::new()).unwrap();
        assert_relative_eq!(next.robots()[0].pose.x, -0.01, epsilon = 1e-12);
        assert_relative_eq!(next.robots()[1].pose.x, 0.16, epsilon = 1e-12);
    }

    #[test]
    fn failed_robot_is_an_immovable_obstacle() {
        let cfg = WorldConfig::default();
        let mut failed = robot_at(2, 0.15, 0.0, 0.0);
        failed.failed = true;
        let w = world_with(vec![robot_at(1, 0.0, 0.0, 0.0), failed], vec![]);
        let next = w.step(&cfg, &BTreeMap::new()).unwrap();
        assert_relative_eq!(next.robots()[0].pose.x, -0.02, epsilon = 1e-12);
        assert_eq!(next.robots()[1].pose.x, 0.15);
    }

    #[test]
    fn driving_into_object_pushes_it_monotonically() {
        let cfg = WorldConfig::default();
        let mut w = world_with(vec![robot_at(1, -0.5, 0.0, 0.0)], vec![disc(0.0, 0.0)]);
        let cmds = BTreeMap::from([(RobotId(1), VelocityCommand::new(0.1, 0.0))]);
        let mut last_x = 0.0;
        let mut pushed_ticks = 0;
        for _ in 0..60 {
            let before = w.clone();
            w = w.step(&cfg, &cmds).unwrap();
            // stepwise oracle: push resolution of the integrated robot
            let mut probe = before.robots()[0].clone();
            probe.pose = integrate_unicycle(probe.pose, 0.1, 0.0, cfg.dt).unwrap();
            let expected = resolve_push(&before.objects()[0], [&probe]);
            let obj = &w.objects()[0];
            assert_relative_eq!(obj.pose.x, expected.x, epsilon = 1e-12);
            assert!(obj.pose.x >= last_x);
            if obj.pose.x > last_x {
                pushed_ticks += 1;
            }
            last_x = obj.pose.x;
            assert!(w.max_penetration() <= 1e-9);
        }
        assert!(pushed_ticks > 0);
        let gap = (w.robots()[0].position() - w.objects()[0].position()).norm() - 0.235;
        assert!(gap.abs() < 1e-9, "final gap {gap}");
    }

    #[test]
    fn squeeze_leaves_no_penetration() {
        let cfg = WorldConfig::default();
        let mut w = world_with(
            vec![robot_at(1, -0.236, 0.0, 0.0), robot_at(2, 0.236, 0.0, PI)],
            vec![disc(0.0, 0.0)],
        );
        let cmds = BTreeMap::from([
            (RobotId(1), VelocityCommand::new(0.15, 0.0)),
            (RobotId(2), VelocityCommand::new(0.15, 0.0)),
        ]);
        for _ in 0..20 {
            w = w.step(&cfg, &cmds).unwrap();
            assert!(w.max_penetration() <= 1e-9);
        }
    }

    #[test]
    fn bodies_stay_inside_arena() {
        let cfg = WorldConfig::default();
        let mut w = world_with(vec![robot_at(1, 1.7, 0.0, 0.0)], vec![]);
        let cmds = BTreeMap::from([(RobotId(1), VelocityCommand::new(0.15, 0.0))]);
        for _ in 0..100 {
            w = w.step(&cfg, &cmds).unwrap();
        }
        assert!(w.robots()[0].pose.x <= 2.0 - 0.085 + 1e-12);
    }

    #[test]
    fn world_rejects_duplicates_and_small_objects() {
        let mut w = world_with(vec![robot_at(1, 0.0, 0.0, 0.0)], vec![]);
        assert!(w.add_robot(robot_at(1, 1.0, 0.0, 0.0)).is_err());
        let small = ObjectState::new(ObjectId(3), Pose2D::default(), 0.05, 1);
        assert!(w.add_object(small).is_err());
        assert!(w.add_robot(robot_at(4, 9.0, 0.0, 0.0)).is_err());
    }
}
