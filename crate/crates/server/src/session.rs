//! The simulation owner's side of the server: applies decoded commands,
//! replays scripted frames and advances the simulation.

use std::collections::VecDeque;

use cotransport_core::sim::{ScriptedMessage, SimError, Simulation};

use crate::protocol::{self, Ack, CommandMessage, ErrorReply, SeqTracker, ServerMessage};
use crate::snapshot::Snapshot;

#[derive(Debug)]
pub struct Session {
    sim: Simulation,
    /// (tick, raw frame), in replay order.
    script: VecDeque<(u64, String)>,
    script_seq: SeqTracker,
}

impl Session {
    pub fn new(sim: Simulation) -> Self {
        Self {
            sim,
            script: VecDeque::new(),
            script_seq: SeqTracker::default(),
        }
    }

    /// Queues wire frames to be applied at the first tick boundary at or
    /// after their time.
    pub fn with_script(mut self, entries: &[ScriptedMessage]) -> Self {
        let dt = self.sim.config().world.dt;
        let mut timed: Vec<(u64, String)> = entries
            .iter()
            .map(|e| {
                (
                    ((e.at / dt) - 1e-9).ceil().max(0.0) as u64,
                    e.message.clone(),
                )
            })
            .collect();
        timed.sort_by_key(|(tick, _)| *tick);
        self.script = timed.into();
        self
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut Simulation {
        &mut self.sim
    }

    pub fn into_sim(self) -> Simulation {
        self.sim
    }

    pub fn interaction_count(&self) -> u64 {
        self.sim.orchestrator().interaction_count()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::capture(&self.sim)
    }

    /// Applies a decoded command at the current tick boundary.
    pub fn apply(&mut self, msg: &CommandMessage) -> Ack {
        let tick = self.sim.tick_count();
        let result = self.sim.apply_command(&msg.command, Some(msg.seq));
        let interactions = self.interaction_count();
        match result {
            Ok(outcome) => Ack {
                seq: msg.seq,
                accepted: true,
                outcome: serde_json::to_value(outcome).ok(),
                reason: None,
                interactions,
                tick,
            },
            Err(e) => Ack {
                seq: msg.seq,
                accepted: false,
                outcome: None,
                reason: Some(e.to_string()),
                interactions,
                tick,
            },
        }
    }

    /// Decodes, sequence-checks and applies one raw frame.
    pub fn handle_frame(&mut self, bytes: &[u8], seqs: &mut SeqTracker) -> ServerMessage {
        match protocol::decode(bytes).and_then(|msg| seqs.check(msg.seq).map(|_| msg)) {
            Ok(msg) => ServerMessage::Ack(self.apply(&msg)),
            Err(e) => ServerMessage::Error(ErrorReply {
                seq: protocol::salvage_seq(bytes),
                reason: e.to_string(),
            }),
        }
    }

    /// Replays due scripted frames, then advances one tick.
    pub fn tick(&mut self) -> Result<(), SimError> {
        let now = self.sim.tick_count();
        while self.script.front().is_some_and(|(tick, _)| *tick <= now) {
            let (_, frame) = self.script.pop_front().expect("front exists");
            let mut seqs = std::mem::take(&mut self.script_seq);
            let reply = self.handle_frame(frame.as_bytes(), &mut seqs);
            self.script_seq = seqs;
            match reply {
                ServerMessage::Ack(ack) if !ack.accepted => {
                    log::warn!(
                        "scripted command {} rejected: {}",
                        ack.seq,
                        ack.reason.unwrap_or_default()
                    );
                }
                ServerMessage::Error(e) => log::warn!("scripted frame ignored: {}", e.reason),
                _ => {}
            }
        }
        self.sim.tick()
    }

    pub fn script_pending(&self) -> usize {
        self.script.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cotransport_core::config::SimConfig;
    use cotransport_core::sim::Scenario;

    fn session(mode: &str) -> Session {
        let scenario = Scenario::from_toml_str(
            r#"
            [[robots]]
            id = 1
            x = -0.5
            y = 1.0
            [[robots]]
            id = 2
            x = 0.5
            y = 1.0
            [[objects]]
            id = 1
            x = 0.0
            y = 0.0
            min_robots = 2
            "#,
        )
        .unwrap();
        let cfg =
            SimConfig::from_toml_str(&format!("[orchestrator]\nmode = \"{mode}\"\n")).unwrap();
        Session::new(scenario.build(cfg).unwrap())
    }

    fn frame(seq: u64, body: &str) -> String {
        format!(r#"{{"v":1,"seq":{seq},{body}}}"#)
    }

    #[test]
    fn accepted_goal_counts_ping_does_not() {
        let mut s = session("combined");
        let mut seqs = SeqTracker::default();
        let goal = frame(
            1,
            r#""kind":"SetGoal","object":1,"x":0,"y":-1,"theta_deg":152"#,
        );
        let ServerMessage::Ack(ack) = s.handle_frame(goal.as_bytes(), &mut seqs) else {
            panic!("expected ack");
        };
        assert!(ack.accepted);
        assert_eq!(ack.interactions, 1);
        let ServerMessage::Ack(ack) =
            s.handle_frame(frame(2, r#""kind":"Ping""#).as_bytes(), &mut seqs)
        else {
            panic!("expected ack");
        };
        assert!(ack.accepted);
        assert_eq!(ack.interactions, 1);
    }

    #[test]
    fn robot_only_rejects_goal_without_counting() {
        let mut s = session("robot_only");
        let mut seqs = SeqTracker::default();
        let goal = frame(
            1,
            r#""kind":"SetGoal","object":1,"x":0,"y":-1,"theta_deg":152"#,
        );
        let ServerMessage::Ack(ack) = s.handle_frame(goal.as_bytes(), &mut seqs) else {
            panic!("expected ack");
        };
        assert!(!ack.accepted);
        assert!(ack.reason.unwrap().contains("not allowed"));
        assert_eq!(s.interaction_count(), 0);
        assert_eq!(s.sim().orchestrator().audit().records().len(), 1);
    }

    #[test]
    fn bad_frames_get_errors_and_session_continues() {
        let mut s = session("combined");
        let mut seqs = SeqTracker::default();
        assert!(matches!(
            s.handle_frame(b"", &mut seqs),
            ServerMessage::Error(_)
        ));
        let ServerMessage::Error(e) =
            s.handle_frame(frame(4, r#""kind":"Nope""#).as_bytes(), &mut seqs)
        else {
            panic!("expected error");
        };
        assert_eq!(e.seq, Some(4));
        assert!(matches!(
            s.handle_frame(frame(3, r#""kind":"Ping""#).as_bytes(), &mut seqs),
            ServerMessage::Ack(_)
        ));
        assert!(matches!(
            s.handle_frame(frame(3, r#""kind":"Ping""#).as_bytes(), &mut seqs),
            ServerMessage::Error(_)
        ));
    }

    #[test]
    fn script_replays_on_schedule() {
        let s = session("combined");
        let mut s = s.with_script(&[ScriptedMessage {
            at: 0.25,
            message: frame(
                1,
                r#""kind":"SetGoal","object":1,"x":0,"y":-1,"theta_deg":0"#,
            ),
        }]);
        for _ in 0..3 {
            s.tick().unwrap();
        }
        assert_eq!(s.interaction_count(), 0);
        s.tick().unwrap();
        assert_eq!(s.interaction_count(), 1);
        assert_eq!(s.script_pending(), 0);
        let audit = s.sim().orchestrator().audit().records();
        assert_eq!(audit[0].tick(), 3);
    }
}
