//! Low-level steering shared by the transport controller and relocation
//! orders.

use nalgebra::Vector2;

use crate::pose::{angle_diff, bearing, Pose2D};
use crate::world::VelocityCommand;

/// Heading error beyond which a robot turns in place before driving.
pub const TURN_IN_PLACE: f64 = 30.0 * std::f64::consts::PI / 180.0;
/// Surface distance below which obstacles repel.
pub const AVOID_RANGE: f64 = 0.25;
pub const HEADING_GAIN: f64 = 2.0;
/// Speed per meter of remaining distance when closing in on a target.
pub const ARRIVAL_GAIN: f64 = 1.0;
const REPULSION_GAIN: f64 = 0.03;
const REPULSION_MAX: f64 = 1.5;
/// Repulsion is skewed to the right to break head-on standoffs.
const REPULSION_SKEW: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub v_max: f64,
    pub omega_max: f64,
}

/// Turn-then-drive: rotate in place while the heading error exceeds
/// [`TURN_IN_PLACE`], otherwise drive at `speed` with proportional heading
/// correction.
pub fn turn_then_drive(
    pose: &Pose2D,
    heading: f64,
    speed: f64,
    limits: &Limits,
) -> VelocityCommand {
    let err = angle_diff(heading, pose.theta);
    let omega = (HEADING_GAIN * err).clamp(-limits.omega_max, limits.omega_max);
    if err.abs() > TURN_IN_PLACE {
        VelocityCommand::new(0.0, omega)
    } else {
        VelocityCommand::new(speed.clamp(0.0, limits.v_max), omega)
    }
}

/// Pure rotation toward `heading`.
pub fn rotate_toward(pose: &Pose2D, heading: f64, limits: &Limits) -> VelocityCommand {
    let err = angle_diff(heading, pose.theta);
    VelocityCommand::new(
        0.0,
        (HEADING_GAIN * err).clamp(-limits.omega_max, limits.omega_max),
    )
}

/// A disc the steering should keep away from.
#[derive(Debug, Clone, Copy)]
pub struct Obstacle {
    pub center: Vector2<f64>,
    pub radius: f64,
}

/// Saturated inverse-distance repulsion from obstacles within
/// [`AVOID_RANGE`] of the robot surface.
pub fn repulsion(position: Vector2<f64>, radius: f64, obstacles: &[Obstacle]) -> Vector2<f64> {
    let mut total = Vector2::zeros();
    for obstacle in obstacles {
        let delta = position - obstacle.center;
        let distance = delta.norm();
        if distance < 1e-9 {
            continue;
        }
        let gap = (distance - radius - obstacle.radius).max(0.01);
        if gap >= AVOID_RANGE {
            continue;
        }
        let away = delta / distance;
        // rotate clockwise a little so opposing robots pass on the right
        let skewed = Vector2::new(
            away.x + REPULSION_SKEW * away.y,
            away.y - REPULSION_SKEW * away.x,
        )
        .normalize();
        total += skewed * (REPULSION_GAIN * (1.0 / gap - 1.0 / AVOID_RANGE));
    }
    let norm = total.norm();
    if norm > REPULSION_MAX {
        total * (REPULSION_MAX / norm)
    } else {
        total
    }
}

/// Drive toward `waypoint` with obstacle repulsion, slowing as the final
/// `target` approaches. Returns zero once within `arrive_tol` of `target`.
#[allow(clippy::too_many_arguments)]
pub fn navigate(
    pose: &Pose2D,
    radius: f64,
    waypoint: Vector2<f64>,
    target: Vector2<f64>,
    arrive_tol: f64,
    max_speed: f64,
    obstacles: &[Obstacle],
    limits: &Limits,
) -> VelocityCommand {
    let position = pose.position();
    let remaining = (target - position).norm();
    if remaining <= arrive_tol {
        return VelocityCommand::ZERO;
    }
    let to_waypoint = waypoint - position;
    let attract = if to_waypoint.norm() > 1e-9 {
        to_waypoint.normalize()
    } else {
        Vector2::zeros()
    };
    let direction = attract + repulsion(position, radius, obstacles);
    if direction.norm() < 1e-9 {
        return VelocityCommand::ZERO;
    }
    let speed = (ARRIVAL_GAIN * remaining).min(max_speed);
    turn_then_drive(pose, bearing(&direction), speed, limits)
}
