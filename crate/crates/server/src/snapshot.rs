//! World snapshots and the latest-snapshot buffer shared with connections.

use std::sync::{Arc, RwLock};

use cotransport_core::fsm::FsmState;
use cotransport_core::orchestrator::{InteractionMode, TaskStatus};
use cotransport_core::sim::Simulation;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseView {
    pub x: f64,
    pub y: f64,
    pub theta_deg: f64,
}

impl From<cotransport_core::pose::Pose2D> for PoseView {
    fn from(p: cotransport_core::pose::Pose2D) -> Self {
        Self {
            x: p.x,
            y: p.y,
            theta_deg: p.theta_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: u32,
    pub pose: PoseView,
    pub radius: f64,
    pub team: Option<u32>,
    pub frozen: bool,
    pub failed: bool,
    pub relocating: bool,
    /// State of the robot's task controller, if it belongs to an active task.
    pub fsm: Option<FsmState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: u32,
    pub pose: PoseView,
    pub radius: f64,
    pub min_robots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub id: u32,
    pub object: u32,
    pub goal: PoseView,
    pub status: TaskStatus,
    pub fsm: FsmState,
    pub team: Vec<u32>,
}

/// Everything a client needs to draw the scene at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub time: f64,
    pub mode: InteractionMode,
    pub interactions: u64,
    pub robots: Vec<RobotView>,
    pub objects: Vec<ObjectView>,
    pub tasks: Vec<TaskView>,
    /// Queued task ids in activation order.
    pub queue: Vec<u32>,
}

impl Snapshot {
    pub fn capture(sim: &Simulation) -> Self {
        let world = sim.world();
        let orch = sim.orchestrator();
        let robots = world
            .robots()
            .iter()
            .map(|r| {
                let task = orch.task_of(r.id);
                RobotView {
                    id: r.id.0,
                    pose: r.pose.into(),
                    radius: r.body_radius,
                    team: task.map(|t| t.id.0),
                    frozen: r.frozen,
                    failed: r.failed,
                    relocating: orch.orders().contains_key(&r.id),
                    fsm: task
                        .filter(|t| t.status == TaskStatus::Active)
                        .map(|t| t.fsm_state()),
                }
            })
            .collect();
        let objects = world
            .objects()
            .iter()
            .map(|o| ObjectView {
                id: o.id.0,
                pose: o.pose.into(),
                radius: o.radius,
                min_robots: o.min_robots,
            })
            .collect();
        let tasks = orch
            .tasks()
            .iter()
            .map(|t| TaskView {
                id: t.id.0,
                object: t.object.0,
                goal: t.goal.into(),
                status: t.status,
                fsm: t.fsm_state(),
                team: t.team.iter().map(|r| r.0).collect(),
            })
            .collect();
        Self {
            tick: world.tick(),
            time: world.time(),
            mode: orch.mode(),
            interactions: orch.interaction_count(),
            robots,
            objects,
            tasks,
            queue: orch.queue().map(|t| t.0).collect(),
        }
    }

    /// Every team member and every task object exists in the snapshot.
    pub fn is_consistent(&self) -> bool {
        let robot_ok = |id: &u32| self.robots.iter().any(|r| r.id == *id);
        self.tasks
            .iter()
            .all(|t| t.team.iter().all(robot_ok) && self.objects.iter().any(|o| o.id == t.object))
            && self
                .queue
                .iter()
                .all(|q| self.tasks.iter().any(|t| t.id == *q))
    }
}

/// Single-producer, multi-consumer holder of the latest snapshot. Readers
/// get a whole snapshot or the previous one, never a mix.
#[derive(Debug, Clone)]
pub struct SnapshotBuffer {
    inner: Arc<RwLock<Arc<Snapshot>>>,
}

impl SnapshotBuffer {
    pub fn new(initial: Snapshot) -> Self {
        Self {
            inner: Arc::new(RwLock::new(Arc::new(initial))),
        }
    }

    pub fn publish(&self, snapshot: Snapshot) {
        let fresh = Arc::new(snapshot);
        let mut slot = self.inner.write().unwrap_or_else(|p| p.into_inner());
        *slot = fresh;
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).clone()
    }
}
