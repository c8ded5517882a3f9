//! Randomized transport scenarios with the controller invariants checked
//! on every tick.

use std::f64::consts::{PI, TAU};

use cotransport_core::config::SimConfig;
use cotransport_core::fsm::{deploy_radius, FsmState};
use cotransport_core::geometry::strictly_inside_hull;
use cotransport_core::ids::ObjectId;
use cotransport_core::orchestrator::{OperatorCommand, OrchestratorEvent, TaskStatus};
use cotransport_core::pose::{angle_diff, bearing, Pose2D};
use cotransport_core::sim::Simulation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::driver::Driver;
use crate::experiments::BUDGET_TICKS;
use crate::layout::{build_world, START_SEPARATION};
use crate::HarnessError;

/// Largest team the default config staffs.
pub const MAX_TEAM: usize = 4;
/// Robots start at least this far from the object and the goal.
pub const START_CLEARANCE: f64 = 0.45;
/// Slot spacing and radius tolerance.
pub const GEOMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub object: Pose2D,
    pub min_robots: usize,
    pub goal: Pose2D,
    pub robots: Vec<Pose2D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub completed: bool,
    pub ticks: u64,
    pub transitions: usize,
    /// Ticks on which a formation of three or more was checked for caging.
    pub caged_ticks: u64,
}

/// Object and goal anywhere in the middle of the arena, one to five robots
/// scattered clear of both, a minimum team size the default config can
/// staff.
pub fn random_scenario(seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let object = Pose2D::new(
        rng.gen_range(-0.8..=0.8),
        rng.gen_range(-0.8..=0.8),
        rng.gen_range(-PI..PI),
    );
    let goal = if rng.gen_bool(0.05) {
        object
    } else {
        Pose2D::new(
            rng.gen_range(-1.2..=1.2),
            rng.gen_range(-1.2..=1.2),
            rng.gen_range(-PI..PI),
        )
    };
    let n = rng.gen_range(1..=5);
    let mut robots: Vec<Pose2D> = Vec::with_capacity(n);
    while robots.len() < n {
        let p = Pose2D::new(
            rng.gen_range(-1.8..=1.8),
            rng.gen_range(-1.8..=1.8),
            rng.gen_range(-PI..PI),
        );
        let clear =
            p.distance_to(&object) >= START_CLEARANCE && p.distance_to(&goal) >= START_CLEARANCE;
        if clear && robots.iter().all(|q| q.distance_to(&p) >= START_SEPARATION) {
            robots.push(p);
        }
    }
    ScenarioSpec {
        seed,
        object,
        min_robots: rng.gen_range(1..=n.min(MAX_TEAM)),
        goal,
        robots,
    }
}

fn violation(spec: &ScenarioSpec, tick: u64, what: String) -> HarnessError {
    HarnessError::Invariant(format!("scenario {} tick {tick}: {what}", spec.seed))
}

/// Runs one scenario to completion or the tick budget. Any invariant
/// violation is returned as an error.
pub fn check_scenario(
    cfg: &SimConfig,
    spec: &ScenarioSpec,
) -> Result<ScenarioReport, HarnessError> {
    let world = build_world(cfg, &[(spec.object, spec.min_robots)], &spec.robots)?;
    let mut driver = Driver::new(Simulation::new(cfg.clone(), world)?);
    let object = ObjectId(1);
    driver.send_accepted(OperatorCommand::SetGoal {
        object,
        goal: spec.goal,
    })?;

    let p = &cfg.controller;
    let mut report = ScenarioReport {
        completed: false,
        ticks: 0,
        transitions: 0,
        caged_ticks: 0,
    };
    let mut events = driver.events().to_vec();
    loop {
        let tick = driver.sim().tick_count();
        for e in &events {
            match e {
                OrchestratorEvent::Transition { from, to, .. } => {
                    report.transitions += 1;
                    if !FsmState::is_legal_transition(*from, *to) {
                        return Err(violation(
                            spec,
                            tick,
                            format!("illegal transition {from:?} -> {to:?}"),
                        ));
                    }
                }
                OrchestratorEvent::Completed { .. } => {
                    let pose = driver
                        .sim()
                        .world()
                        .object(object)
                        .expect("object exists")
                        .pose;
                    let pos_err = pose.distance_to(&spec.goal);
                    let ang_err = angle_diff(spec.goal.theta, pose.theta).abs();
                    if pos_err > p.pos_tol || ang_err > p.ang_tol {
                        return Err(violation(
                            spec,
                            tick,
                            format!(
                                "completed {pos_err:.4} m / {:.3} deg off goal",
                                ang_err.to_degrees()
                            ),
                        ));
                    }
                    report.completed = true;
                }
                _ => {}
            }
        }
        if report.completed || tick >= BUDGET_TICKS {
            break;
        }

        let sim = driver.sim();
        let world = sim.world();
        let obj = world.object(object).expect("object exists");
        if let Some(task) = sim.orchestrator().task_for_object(object) {
            if task.status == TaskStatus::Active {
                let slots = task.controller.slots();
                let n = slots.len();
                let radius = deploy_radius(obj, cfg.world.robot_radius, p);
                let carried: Vec<Pose2D> = (0..n)
                    .map(|i| task.controller.carried_slot(obj, i))
                    .collect();
                for (i, s) in carried.iter().enumerate() {
                    let r = (s.position() - obj.position()).norm();
                    if (r - radius).abs() > GEOMETRY_TOL {
                        return Err(violation(
                            spec,
                            tick,
                            format!("slot {i} at radius {r}, expected {radius}"),
                        ));
                    }
                    if n > 1 {
                        let next = &carried[(i + 1) % n];
                        let gap = angle_diff(
                            bearing(&(next.position() - obj.position())),
                            bearing(&(s.position() - obj.position())),
                        )
                        .rem_euclid(TAU);
                        if (gap - TAU / n as f64).abs() > GEOMETRY_TOL {
                            return Err(violation(
                                spec,
                                tick,
                                format!("slot gap {i} is {gap} rad"),
                            ));
                        }
                    }
                }
                if n >= 3 {
                    let points: Vec<_> = carried.iter().map(|s| s.position()).collect();
                    if !strictly_inside_hull(&points, &obj.position()) {
                        return Err(violation(
                            spec,
                            tick,
                            "object center outside the slot hull".into(),
                        ));
                    }
                    report.caged_ticks += 1;
                }
            }
        }
        events = driver.step()?;
    }
    report.ticks = driver.sim().tick_count();
    Ok(report)
}
