//! Seeded start layouts.

use cotransport_core::config::SimConfig;
use cotransport_core::ids::{ObjectId, RobotId};
use cotransport_core::pose::Pose2D;
use cotransport_core::world::{ObjectState, RobotState, WorldState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::HarnessError;

/// Axis-aligned rectangle robots are scattered in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strip {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

/// Minimum center distance between two start positions.
pub const START_SEPARATION: f64 = 0.3;

/// Uniform rejection sampling of `n` poses with random headings, kept
/// [`START_SEPARATION`] apart.
pub fn scatter(rng: &mut ChaCha8Rng, n: usize, strip: Strip) -> Result<Vec<Pose2D>, HarnessError> {
    let mut out: Vec<Pose2D> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(HarnessError::Layout(format!(
                "cannot fit {n} robots in {strip:?}"
            )));
        }
        let x = rng.gen_range(strip.min_x..=strip.max_x);
        let y = rng.gen_range(strip.min_y..=strip.max_y);
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let p = Pose2D::new(x, y, theta);
        if out.iter().all(|q| q.distance_to(&p) >= START_SEPARATION) {
            out.push(p);
        }
    }
    Ok(out)
}

/// World with objects `(pose, min_robots)` numbered from 1 and robots
/// numbered from 1.
pub fn build_world(
    cfg: &SimConfig,
    objects: &[(Pose2D, usize)],
    robots: &[Pose2D],
) -> Result<WorldState, HarnessError> {
    let mut world = WorldState::new(cfg.world.arena);
    for (i, (pose, min)) in objects.iter().enumerate() {
        world.add_object(ObjectState::new(
            ObjectId(i as u32 + 1),
            *pose,
            cfg.world.object_radius,
            *min,
        ))?;
    }
    for (i, pose) in robots.iter().enumerate() {
        world.add_robot(RobotState::new(
            RobotId(i as u32 + 1),
            *pose,
            cfg.world.robot_radius,
        ))?;
    }
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const STRIP: Strip = Strip {
        min_x: -1.5,
        max_x: 1.5,
        min_y: 0.9,
        max_y: 1.6,
    };

    #[test]
    fn seeded_and_separated() {
        let a = scatter(&mut ChaCha8Rng::seed_from_u64(4), 5, STRIP).unwrap();
        let b = scatter(&mut ChaCha8Rng::seed_from_u64(4), 5, STRIP).unwrap();
        assert_eq!(a, b);
        for (i, p) in a.iter().enumerate() {
            assert!(p.x >= STRIP.min_x && p.x <= STRIP.max_x);
            assert!(p.y >= STRIP.min_y && p.y <= STRIP.max_y);
            for q in &a[i + 1..] {
                assert!(p.distance_to(q) >= START_SEPARATION);
            }
        }
    }

    #[test]
    fn impossible_layout_is_an_error() {
        let tiny = Strip {
            min_x: 0.0,
            max_x: 0.1,
            min_y: 0.0,
            max_y: 0.1,
        };
        assert!(scatter(&mut ChaCha8Rng::seed_from_u64(1), 3, tiny).is_err());
    }
}
