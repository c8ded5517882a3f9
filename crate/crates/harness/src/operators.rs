//! Scripted robot-only operator: steers two robots behind the object and
//! nudges it toward the goal one short push at a time, the way a person
//! would with per-robot waypoints only.

use cotransport_core::ids::{ObjectId, RobotId};
use cotransport_core::orchestrator::OperatorCommand;
use nalgebra::{Rotation2, Vector2};

use crate::driver::Driver;
use crate::experiments::GOAL_REGION_RADIUS;
use crate::HarnessError;

/// Object travel per push.
pub const PUSH_STEP: f64 = 0.25;
/// Angle of each pusher off the push axis, behind the object.
pub const PUSHER_SPREAD: f64 = 35.0 * std::f64::consts::PI / 180.0;
/// Gap kept to the object surface while lining up.
pub const STANDOFF: f64 = 0.04;
/// Lateral clearance of a detour around the object.
pub const DETOUR_CLEARANCE: f64 = 0.12;
/// Pushers this close to their line-up spots start pushing.
pub const LINE_UP_TOL: f64 = 0.05;
/// Seconds to wait for stragglers before re-issuing a step.
pub const PATIENCE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    LineUp,
    Push,
}

#[derive(Debug, Clone)]
pub struct PushOperator {
    object: ObjectId,
    goal: Vector2<f64>,
    /// Left and right pusher relative to the push direction.
    pushers: [RobotId; 2],
    phase: Phase,
    issued_at: Option<f64>,
}

impl PushOperator {
    /// Picks the two robots nearest the object as pushers.
    pub fn new(
        driver: &Driver,
        object: ObjectId,
        goal: Vector2<f64>,
    ) -> Result<Self, HarnessError> {
        let world = driver.sim().world();
        let obj = world
            .object(object)
            .ok_or_else(|| HarnessError::Layout(format!("no object {object}")))?;
        let mut by_distance: Vec<(f64, RobotId)> = world
            .robots()
            .iter()
            .filter(|r| !r.failed)
            .map(|r| ((r.position() - obj.position()).norm(), r.id))
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if by_distance.len() < 2 {
            return Err(HarnessError::Layout(
                "need two working robots to push".into(),
            ));
        }
        let (a, b) = (by_distance[0].1, by_distance[1].1);
        // left pusher is the one further counter-clockwise about the push axis
        let dir = push_direction(obj.position(), goal);
        let side = |id: RobotId| {
            let rel = world.robot(id).expect("robot exists").position() - obj.position();
            dir.x * rel.y - dir.y * rel.x
        };
        let pushers = if side(a) >= side(b) { [a, b] } else { [b, a] };
        Ok(Self {
            object,
            goal,
            pushers,
            phase: Phase::LineUp,
            issued_at: None,
        })
    }

    pub fn pushers(&self) -> [RobotId; 2] {
        self.pushers
    }

    /// Issues the next batch of waypoints once the previous batch has
    /// arrived (or stalled). Does nothing once the object is in the goal
    /// region.
    pub fn act(&mut self, driver: &mut Driver) -> Result<(), HarnessError> {
        let (obj_pos, contact) = {
            let world = driver.sim().world();
            let obj = world.object(self.object).expect("object exists");
            let robot = world.robot(self.pushers[0]).expect("pusher exists");
            (obj.position(), obj.radius + robot.body_radius)
        };
        if (obj_pos - self.goal).norm() <= GOAL_REGION_RADIUS {
            return Ok(());
        }
        let busy = self
            .pushers
            .iter()
            .any(|r| driver.sim().orchestrator().orders().contains_key(r));
        if let Some(at) = self.issued_at {
            if busy && driver.time() - at < PATIENCE {
                return Ok(());
            }
        }

        let dir = push_direction(obj_pos, self.goal);
        let spot = |k: usize, center: Vector2<f64>, reach: f64| {
            let angle = if k == 0 {
                -PUSHER_SPREAD
            } else {
                PUSHER_SPREAD
            };
            center + Rotation2::new(angle) * (-dir) * reach
        };
        if self.phase == Phase::LineUp && self.issued_at.is_some() {
            let world = driver.sim().world();
            let ready = self.pushers.iter().enumerate().all(|(k, r)| {
                let p = world.robot(*r).expect("pusher exists").position();
                (p - spot(k, obj_pos, contact + STANDOFF)).norm() <= LINE_UP_TOL
            });
            if ready {
                self.phase = Phase::Push;
            }
        }
        for k in 0..2 {
            let robot = self.pushers[k];
            let target = match self.phase {
                Phase::LineUp => {
                    let s = spot(k, obj_pos, contact + STANDOFF);
                    let from = driver
                        .sim()
                        .world()
                        .robot(robot)
                        .expect("pusher exists")
                        .position();
                    detour(from, s, obj_pos, contact).unwrap_or(s)
                }
                Phase::Push => {
                    let travel = PUSH_STEP.min((self.goal - obj_pos).norm());
                    spot(k, obj_pos + dir * travel, contact)
                }
            };
            driver.send_accepted(OperatorCommand::MoveRobot {
                robot,
                x: target.x,
                y: target.y,
            })?;
        }
        self.issued_at = Some(driver.time());
        Ok(())
    }
}

fn push_direction(from: Vector2<f64>, to: Vector2<f64>) -> Vector2<f64> {
    let d = to - from;
    if d.norm() < 1e-9 {
        Vector2::new(1.0, 0.0)
    } else {
        d.normalize()
    }
}

/// A waypoint beside the object when the straight line to `spot` would
/// brush it.
fn detour(
    from: Vector2<f64>,
    spot: Vector2<f64>,
    obj: Vector2<f64>,
    contact: f64,
) -> Option<Vector2<f64>> {
    let seg = spot - from;
    let len2 = seg.norm_squared();
    if len2 < 1e-12 {
        return None;
    }
    let t = ((obj - from).dot(&seg) / len2).clamp(0.0, 1.0);
    let closest = from + seg * t;
    if (closest - obj).norm() >= contact + STANDOFF / 2.0 {
        return None;
    }
    let off = closest - obj;
    let lateral = if off.norm() > 1e-9 {
        off.normalize()
    } else {
        Vector2::new(-seg.y, seg.x).normalize()
    };
    Some(obj + lateral * (contact + DETOUR_CLEARANCE))
}
