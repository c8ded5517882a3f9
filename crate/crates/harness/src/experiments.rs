//! Scripted experiment runs. Each trial builds a fresh world from its own
//! seed, so trials never share state.

use cotransport_core::config::SimConfig;
use cotransport_core::fsm::FsmState;
use cotransport_core::ids::{ObjectId, RobotId};
use cotransport_core::orchestrator::{
    InteractionMode, OperatorCommand, OrchestratorEvent, TaskStatus,
};
use cotransport_core::pose::{angle_diff, Pose2D};
use cotransport_core::sim::Simulation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::driver::Driver;
use crate::layout::{build_world, scatter, Strip};
use crate::operators::PushOperator;
use crate::HarnessError;

/// Ticks per trial (600 s at 10 Hz).
pub const BUDGET_TICKS: u64 = 6000;

/// Start strip above the origin, clear of the object.
pub const NORTH_STRIP: Strip = Strip {
    min_x: -1.5,
    max_x: 1.5,
    min_y: 0.9,
    max_y: 1.6,
};

/// Start strip below both objects of the two-object run.
pub const SOUTH_STRIP: Strip = Strip {
    min_x: -1.5,
    max_x: 1.5,
    min_y: -1.6,
    max_y: -1.0,
};

pub const EXP1_GOAL: (f64, f64, f64) = (0.0, -1.0, 152.0);
pub const EXP2_GOALS: [(f64, f64, f64); 2] = [(0.8, 0.0, 128.0), (-1.0, 0.5, 46.0)];
pub const EXP2_STARTS: [(f64, f64); 2] = [(0.0, 0.0), (-0.5, 1.0)];
/// Operator reaction time after the first object arrives, seconds.
pub const REASSIGN_DELAY: (f64, f64) = (5.0, 15.0);
pub const REASSIGN_COUNT: usize = 3;

/// Translation-only success region of the interaction study.
pub const GOAL_REGION_RADIUS: f64 = 0.25;
pub const STUDY_GOAL: (f64, f64) = (0.0, -1.0);

/// Delay between entering Push and the injected failure.
pub const PUSH_FAULT_DELAY: f64 = 3.0;
/// Failure time of the two robots in the suspension scenario.
pub const REACH_FAULT_TIME: f64 = 2.0;
/// Operator reaction time after a suspension, seconds.
pub const SUSPEND_REACTION: f64 = 5.0;

/// One CSV row: one object in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub experiment: &'static str,
    pub trial: usize,
    pub seed: u64,
    pub object: ObjectId,
    pub completed: bool,
    pub err_x: f64,
    pub err_y: f64,
    /// Wrapped signed difference, degrees.
    pub err_theta_deg: f64,
    pub completion_time: Option<f64>,
    pub interactions: u64,
    pub reassignment_time: Option<f64>,
    pub ticks: u64,
    pub timeline: Vec<OrchestratorEvent>,
}

/// Records of a run plus every expectation it violated.
#[derive(Debug, Clone, Default)]
pub struct TrialOutcome {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<String>,
}

impl TrialOutcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    fn merge(&mut self, other: TrialOutcome) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
    }
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

fn goal_pose((x, y, deg): (f64, f64, f64)) -> Pose2D {
    Pose2D::from_degrees(x, y, deg)
}

fn completed_at(events: &[OrchestratorEvent], object: ObjectId) -> Option<u64> {
    events.iter().find_map(|e| match e {
        OrchestratorEvent::Completed {
            tick, object: o, ..
        } if *o == object => Some(*tick),
        _ => None,
    })
}

fn record(
    experiment: &'static str,
    trial: usize,
    seed: u64,
    driver: &Driver,
    object: ObjectId,
    goal: Pose2D,
    completed: bool,
) -> TrialRecord {
    let sim = driver.sim();
    let pose = sim.world().object(object).expect("object exists").pose;
    let dt = sim.config().world.dt;
    TrialRecord {
        experiment,
        trial,
        seed,
        object,
        completed,
        err_x: pose.x - goal.x,
        err_y: pose.y - goal.y,
        err_theta_deg: angle_diff(pose.theta, goal.theta).to_degrees(),
        completion_time: completed_at(driver.events(), object).map(|t| t as f64 * dt),
        interactions: driver.interactions(),
        reassignment_time: None,
        ticks: sim.tick_count(),
        timeline: driver.events().to_vec(),
    }
}

fn new_driver(
    cfg: &SimConfig,
    objects: &[(Pose2D, usize)],
    robots: &[Pose2D],
) -> Result<Driver, HarnessError> {
    let world = build_world(cfg, objects, robots)?;
    Ok(Driver::new(Simulation::new(cfg.clone(), world)?))
}

fn task_done(driver: &Driver, object: ObjectId) -> bool {
    driver
        .sim()
        .orchestrator()
        .latest_task_for_object(object)
        .is_some_and(|t| t.status == TaskStatus::Complete)
}

/// Error magnitudes allowed on a completed record.
fn within_tolerance(cfg: &SimConfig, r: &TrialRecord) -> bool {
    let c = &cfg.controller;
    r.err_x.hypot(r.err_y) <= c.pos_tol + 1e-9
        && r.err_theta_deg.abs() <= c.ang_tol.to_degrees() + 1e-9
}

/// Four robots, one object, a single goal command.
pub fn run_exp1(cfg: &SimConfig, trials: usize, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut out = TrialOutcome::default();
    for trial in 0..trials {
        out.merge(exp1_trial(cfg, trial, trial_seed(seed, trial))?);
    }
    Ok(out)
}

pub fn exp1_trial(cfg: &SimConfig, trial: usize, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robots = scatter(&mut rng, 4, NORTH_STRIP)?;
    let mut driver = new_driver(cfg, &[(Pose2D::new(0.0, 0.0, 0.0), 2)], &robots)?;
    let object = ObjectId(1);
    let goal = goal_pose(EXP1_GOAL);
    driver.send_accepted(OperatorCommand::SetGoal { object, goal })?;
    while !task_done(&driver, object) && driver.sim().tick_count() < BUDGET_TICKS {
        driver.step()?;
    }
    let r = record(
        "exp1",
        trial,
        seed,
        &driver,
        object,
        goal,
        task_done(&driver, object),
    );
    let mut out = TrialOutcome::default();
    if !r.completed {
        out.failures
            .push(format!("exp1 trial {trial}: budget exhausted"));
    } else if !within_tolerance(cfg, &r) {
        out.failures
            .push(format!("exp1 trial {trial}: completed outside tolerance"));
    }
    out.records.push(r);
    Ok(out)
}

/// Two objects, five robots. The second task starts understaffed and only
/// moves after the scripted operator reassigns idle robots to it. Each
/// trial is paired with a control run that never reassigns.
pub fn run_exp2(cfg: &SimConfig, trials: usize, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut out = TrialOutcome::default();
    for trial in 0..trials {
        let s = trial_seed(seed, trial);
        out.merge(exp2_trial(cfg, trial, s, true)?);
        out.merge(exp2_trial(cfg, trial, s, false)?);
    }
    Ok(out)
}

pub fn exp2_trial(
    cfg: &SimConfig,
    trial: usize,
    seed: u64,
    reassign: bool,
) -> Result<TrialOutcome, HarnessError> {
    let experiment = if reassign { "exp2" } else { "exp2_control" };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robots = scatter(&mut rng, 5, SOUTH_STRIP)?;
    let delay = rng.gen_range(REASSIGN_DELAY.0..=REASSIGN_DELAY.1);
    let objects: Vec<(Pose2D, usize)> = EXP2_STARTS
        .iter()
        .map(|&(x, y)| (Pose2D::new(x, y, 0.0), 2))
        .collect();
    let mut driver = new_driver(cfg, &objects, &robots)?;
    let (obj1, obj2) = (ObjectId(1), ObjectId(2));
    let goals = [goal_pose(EXP2_GOALS[0]), goal_pose(EXP2_GOALS[1])];
    driver.send_accepted(OperatorCommand::SetGoal {
        object: obj1,
        goal: goals[0],
    })?;
    driver.send_accepted(OperatorCommand::SetGoal {
        object: obj2,
        goal: goals[1],
    })?;

    let mut out = TrialOutcome::default();
    let queued_team = driver
        .sim()
        .orchestrator()
        .task_for_object(obj2)
        .map(|t| (t.status, t.team.len()));
    if queued_team != Some((TaskStatus::Queued, 1)) {
        out.failures.push(format!(
            "{experiment} trial {trial}: second task not queued with one robot ({queued_team:?})"
        ));
    }

    let dt = cfg.world.dt;
    let mut reassigned_at: Option<f64> = None;
    while driver.sim().tick_count() < BUDGET_TICKS {
        if task_done(&driver, obj1) && task_done(&driver, obj2) {
            break;
        }
        if reassign && reassigned_at.is_none() {
            if let Some(t1) = completed_at(driver.events(), obj1) {
                if driver.time() >= t1 as f64 * dt + delay - 1e-9 {
                    reassigned_at = Some(driver.time());
                    for robot in nearest_idle(&driver, obj2).into_iter().take(REASSIGN_COUNT) {
                        driver.send_accepted(OperatorCommand::ReassignRobot {
                            robot,
                            object: obj2,
                        })?;
                    }
                }
            }
        }
        driver.step()?;
    }

    let mut r1 = record(
        experiment,
        trial,
        seed,
        &driver,
        obj1,
        goals[0],
        task_done(&driver, obj1),
    );
    let mut r2 = record(
        experiment,
        trial,
        seed,
        &driver,
        obj2,
        goals[1],
        task_done(&driver, obj2),
    );
    r2.reassignment_time = reassigned_at;
    r1.timeline.clear();

    let c1 = r1.completion_time;
    let c2 = r2.completion_time;
    if reassign {
        match (c1, reassigned_at, c2) {
            (Some(a), Some(b), Some(c)) if a < b && b < c => {}
            other => out.failures.push(format!(
                "{experiment} trial {trial}: expected completion(1) < reassignment < completion(2), got {other:?}"
            )),
        }
    } else {
        if c1.is_none() {
            out.failures.push(format!(
                "{experiment} trial {trial}: first object did not complete"
            ));
        }
        if c2.is_some() {
            out.failures.push(format!(
                "{experiment} trial {trial}: second object completed without reassignment"
            ));
        }
    }
    for r in [&r1, &r2] {
        if r.completed && !within_tolerance(cfg, r) {
            out.failures.push(format!(
                "{experiment} trial {trial}: object {} outside tolerance",
                r.object
            ));
        }
    }
    out.records.push(r1);
    out.records.push(r2);
    Ok(out)
}

fn nearest_idle(driver: &Driver, object: ObjectId) -> Vec<RobotId> {
    let world = driver.sim().world();
    let at = world.object(object).expect("object exists").position();
    let mut idle: Vec<(f64, RobotId)> = driver
        .sim()
        .orchestrator()
        .idle_robots(world)
        .into_iter()
        .map(|id| {
            (
                (world.robot(id).expect("idle robot exists").position() - at).norm(),
                id,
            )
        })
        .collect();
    idle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    idle.into_iter().map(|(_, id)| id).collect()
}

/// Operator strategy of the interaction study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyPolicy {
    /// One goal command per object.
    Goal,
    /// Waypoints for two pushing robots, one step at a time.
    Waypoints,
    /// No commands at all.
    Idle,
}

/// Each trial runs the goal policy in combined mode and the waypoint
/// policy in robot-only mode from the same start layout.
pub fn run_study(cfg: &SimConfig, trials: usize, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut out = TrialOutcome::default();
    for trial in 0..trials {
        let s = trial_seed(seed, trial);
        let combined = study_trial(cfg, trial, s, InteractionMode::Combined, StudyPolicy::Goal)?;
        let robot_only = study_trial(
            cfg,
            trial,
            s,
            InteractionMode::RobotOnly,
            StudyPolicy::Waypoints,
        )?;
        let (a, b) = (
            combined.records[0].interactions,
            robot_only.records[0].interactions,
        );
        if a >= b {
            out.failures.push(format!(
                "study trial {trial}: combined used {a} interactions, robot-only {b}"
            ));
        }
        out.merge(combined);
        out.merge(robot_only);
    }
    Ok(out)
}

pub fn study_trial(
    cfg: &SimConfig,
    trial: usize,
    seed: u64,
    mode: InteractionMode,
    policy: StudyPolicy,
) -> Result<TrialOutcome, HarnessError> {
    let experiment = match mode {
        InteractionMode::Combined => "study_combined",
        InteractionMode::RobotOnly => "study_robot_only",
    };
    let mut cfg = cfg.clone();
    cfg.orchestrator.mode = mode;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robots = scatter(&mut rng, 4, NORTH_STRIP)?;
    let mut driver = new_driver(&cfg, &[(Pose2D::new(0.0, 0.0, 0.0), 2)], &robots)?;
    let object = ObjectId(1);
    let start_theta = driver
        .sim()
        .world()
        .object(object)
        .expect("object exists")
        .pose
        .theta;
    let goal = Pose2D::new(STUDY_GOAL.0, STUDY_GOAL.1, start_theta);

    let in_region = |d: &Driver| {
        let p = d
            .sim()
            .world()
            .object(object)
            .expect("object exists")
            .position();
        (p - goal.position()).norm() <= GOAL_REGION_RADIUS
    };
    let mut operator = match policy {
        StudyPolicy::Goal => {
            driver.send_accepted(OperatorCommand::SetGoal { object, goal })?;
            None
        }
        StudyPolicy::Waypoints => Some(PushOperator::new(&driver, object, goal.position())?),
        StudyPolicy::Idle => None,
    };
    let mut success_tick = None;
    while driver.sim().tick_count() < BUDGET_TICKS {
        let settled = match policy {
            StudyPolicy::Goal => task_done(&driver, object),
            _ => in_region(&driver) && driver.sim().orchestrator().orders().is_empty(),
        };
        if settled {
            success_tick = Some(driver.sim().tick_count());
            break;
        }
        if let Some(op) = operator.as_mut() {
            op.act(&mut driver)?;
        }
        driver.step()?;
    }
    let completed = success_tick.is_some() && in_region(&driver);
    let mut r = record(experiment, trial, seed, &driver, object, goal, completed);
    if policy != StudyPolicy::Goal {
        r.completion_time = success_tick.map(|t| t as f64 * cfg.world.dt);
    }
    let mut out = TrialOutcome::default();
    if !completed {
        out.failures.push(format!(
            "{experiment} trial {trial}: object not in the goal region within budget"
        ));
    }
    let audit = driver.sim().orchestrator().audit().records();
    if cotransport_core::audit::count_interactions(audit) != r.interactions {
        out.failures.push(format!(
            "{experiment} trial {trial}: interaction count disagrees with the audit log"
        ));
    }
    out.records.push(r);
    Ok(out)
}

/// Both fault scenarios per trial.
pub fn run_faults(cfg: &SimConfig, trials: usize, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut out = TrialOutcome::default();
    for trial in 0..trials {
        let s = trial_seed(seed, trial);
        out.merge(push_fault_trial(cfg, trial, s)?);
        out.merge(suspension_trial(cfg, trial, s)?);
    }
    Ok(out)
}

/// A side robot fails shortly after the team starts pushing. The remaining
/// three redeploy and finish without operator help.
pub fn push_fault_trial(
    cfg: &SimConfig,
    trial: usize,
    seed: u64,
) -> Result<TrialOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robots = scatter(&mut rng, 4, NORTH_STRIP)?;
    let mut driver = new_driver(cfg, &[(Pose2D::new(0.0, 0.0, 0.0), 2)], &robots)?;
    let object = ObjectId(1);
    let goal = goal_pose(EXP1_GOAL);
    driver.send_accepted(OperatorCommand::SetGoal { object, goal })?;

    let mut out = TrialOutcome::default();
    let mut victim = None;
    while !task_done(&driver, object) && driver.sim().tick_count() < BUDGET_TICKS {
        let events = driver.step()?;
        if victim.is_some() {
            continue;
        }
        let pushing = events.iter().any(|e| {
            matches!(
                e,
                OrchestratorEvent::Transition {
                    to: FsmState::PushObject,
                    ..
                }
            )
        });
        if pushing {
            let task = driver
                .sim()
                .orchestrator()
                .task_for_object(object)
                .expect("task is open");
            let side = task
                .team
                .iter()
                .copied()
                .find(|r| task.controller.slot_of(*r) == Some(1));
            if let Some(robot) = side {
                let at = driver.time() + PUSH_FAULT_DELAY;
                driver.sim_mut().schedule_failure(robot, at)?;
                victim = Some(robot);
            }
        }
    }
    let r = record(
        "faults_push",
        trial,
        seed,
        &driver,
        object,
        goal,
        task_done(&driver, object),
    );
    let failed_mid_push = r
        .timeline
        .iter()
        .any(|e| matches!(e, OrchestratorEvent::RobotFailed { .. }));
    if victim.is_none() || !failed_mid_push {
        out.failures.push(format!(
            "faults_push trial {trial}: no failure was injected"
        ));
    }
    if !r.completed {
        out.failures.push(format!(
            "faults_push trial {trial}: budget exhausted after the failure"
        ));
    } else if !within_tolerance(cfg, &r) {
        out.failures.push(format!(
            "faults_push trial {trial}: completed outside tolerance"
        ));
    }
    out.records.push(r);
    Ok(out)
}

/// Two of four team robots fail while deploying, leaving the task below
/// its minimum. It must stay suspended until the operator reassigns the
/// spare robot, then finish.
pub fn suspension_trial(
    cfg: &SimConfig,
    trial: usize,
    seed: u64,
) -> Result<TrialOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robots = scatter(&mut rng, 5, NORTH_STRIP)?;
    let mut driver = new_driver(cfg, &[(Pose2D::new(0.0, 0.0, 0.0), 3)], &robots)?;
    let object = ObjectId(1);
    let goal = goal_pose(EXP1_GOAL);
    driver.send_accepted(OperatorCommand::SetGoal { object, goal })?;

    let team = driver
        .sim()
        .orchestrator()
        .task_for_object(object)
        .map(|t| t.team.clone())
        .unwrap_or_default();
    let mut out = TrialOutcome::default();
    if team.len() != 4 {
        out.failures.push(format!(
            "faults_suspend trial {trial}: team of {} instead of 4",
            team.len()
        ));
    }
    for robot in team.iter().rev().take(2) {
        driver
            .sim_mut()
            .schedule_failure(*robot, REACH_FAULT_TIME)?;
    }

    let dt = cfg.world.dt;
    let mut suspended_at: Option<f64> = None;
    let mut reassigned_at: Option<f64> = None;
    let mut active_while_short = false;
    while !task_done(&driver, object) && driver.sim().tick_count() < BUDGET_TICKS {
        let events = driver.step()?;
        for e in &events {
            if let OrchestratorEvent::Suspended { tick, .. } = e {
                suspended_at.get_or_insert(*tick as f64 * dt);
            }
        }
        let task = driver
            .sim()
            .orchestrator()
            .latest_task_for_object(object)
            .expect("task exists");
        if task.status == TaskStatus::Active && task.team.len() < 3 {
            active_while_short = true;
        }
        if let (Some(s), None) = (suspended_at, reassigned_at) {
            if driver.time() >= s + SUSPEND_REACTION - 1e-9 {
                if task.status != TaskStatus::Queued {
                    out.failures.push(format!(
                        "faults_suspend trial {trial}: task resumed on its own"
                    ));
                }
                reassigned_at = Some(driver.time());
                for robot in nearest_idle(&driver, object) {
                    driver.send_accepted(OperatorCommand::ReassignRobot { robot, object })?;
                }
            }
        }
    }
    let mut r = record(
        "faults_suspend",
        trial,
        seed,
        &driver,
        object,
        goal,
        task_done(&driver, object),
    );
    r.reassignment_time = reassigned_at;
    if suspended_at.is_none() {
        out.failures.push(format!(
            "faults_suspend trial {trial}: task never suspended"
        ));
    }
    if active_while_short {
        out.failures.push(format!(
            "faults_suspend trial {trial}: task ran below its minimum team"
        ));
    }
    match (reassigned_at, r.completion_time) {
        (Some(a), Some(c)) if a < c => {}
        other => out.failures.push(format!(
            "faults_suspend trial {trial}: expected reassignment before completion, got {other:?}"
        )),
    }
    if r.completed && !within_tolerance(cfg, &r) {
        out.failures.push(format!(
            "faults_suspend trial {trial}: completed outside tolerance"
        ));
    }
    out.records.push(r);
    Ok(out)
}
