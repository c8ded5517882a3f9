//! Wire protocol: one JSON object per WebSocket text frame.
//!
//! Client to server:
//!
//! ```json
//! {"v":1,"seq":7,"kind":"SetGoal","object":1,"x":0.0,"y":-1.0,"theta_deg":152.0}
//! {"v":1,"seq":8,"kind":"MoveRobot","robot":2,"x":0.5,"y":0.4}
//! {"v":1,"seq":9,"kind":"ReassignRobot","robot":2,"object":1}
//! {"v":1,"seq":10,"kind":"SetMode","mode":"robot_only"}
//! {"v":1,"seq":11,"kind":"Ping"}
//! ```
//!
//! Server to client: `Ack`, `Error` and `Snapshot` messages, each tagged
//! with `kind` and `v`. Angles are degrees on the wire and radians inside.
//! See `docs/protocol.md` for the full schema.

use cotransport_core::ids::{ObjectId, RobotId};
use cotransport_core::orchestrator::{InteractionMode, OperatorCommand};
use cotransport_core::pose::Pose2D;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::snapshot::Snapshot;

pub const PROTOCOL_VERSION: u64 = 1;

/// A decoded client command, in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandMessage {
    pub seq: u64,
    pub command: OperatorCommand,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("empty message")]
    Empty,
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("message must be a JSON object")]
    NotObject,
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("unsupported protocol version {0}")]
    Version(String),
    #[error("field `{field}` {reason}")]
    BadField { field: &'static str, reason: String },
    #[error("unknown kind {0:?}")]
    UnknownKind(String),
    #[error("invalid {kind} payload: {reason}")]
    Payload { kind: String, reason: String },
    #[error("sequence number {got} does not follow {last}")]
    Sequence { got: u64, last: u64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetGoalPayload {
    object: u32,
    x: f64,
    y: f64,
    theta_deg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MoveRobotPayload {
    robot: u32,
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReassignPayload {
    robot: u32,
    object: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetModePayload {
    mode: InteractionMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PingPayload {}

fn payload<T: DeserializeOwned>(kind: &str, rest: Map<String, Value>) -> Result<T, DecodeError> {
    serde_json::from_value(Value::Object(rest)).map_err(|e| DecodeError::Payload {
        kind: kind.to_string(),
        reason: e.to_string(),
    })
}

fn finite(kind: &str, field: &str, value: f64) -> Result<f64, DecodeError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(DecodeError::Payload {
            kind: kind.to_string(),
            reason: format!("{field} is not finite"),
        })
    }
}

/// Parses one client frame.
pub fn decode(bytes: &[u8]) -> Result<CommandMessage, DecodeError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(DecodeError::Empty);
    }
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| DecodeError::Json(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(DecodeError::NotObject);
    };
    match map.remove("v") {
        None => return Err(DecodeError::Missing("v")),
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(v) => return Err(DecodeError::Version(v.to_string())),
    }
    let seq = match map.remove("seq") {
        None => return Err(DecodeError::Missing("seq")),
        Some(v) => v.as_u64().ok_or(DecodeError::BadField {
            field: "seq",
            reason: "must be a non-negative integer".into(),
        })?,
    };
    let kind = match map.remove("kind") {
        None => return Err(DecodeError::Missing("kind")),
        Some(Value::String(s)) => s,
        Some(_) => {
            return Err(DecodeError::BadField {
                field: "kind",
                reason: "must be a string".into(),
            })
        }
    };
    let command = match kind.as_str() {
        "SetGoal" => {
            let p: SetGoalPayload = payload(&kind, map)?;
            OperatorCommand::SetGoal {
                object: ObjectId(p.object),
                goal: Pose2D::from_degrees(
                    finite(&kind, "x", p.x)?,
                    finite(&kind, "y", p.y)?,
                    finite(&kind, "theta_deg", p.theta_deg)?,
                ),
            }
        }
        "MoveRobot" => {
            let p: MoveRobotPayload = payload(&kind, map)?;
            OperatorCommand::MoveRobot {
                robot: RobotId(p.robot),
                x: finite(&kind, "x", p.x)?,
                y: finite(&kind, "y", p.y)?,
            }
        }
        "ReassignRobot" => {
            let p: ReassignPayload = payload(&kind, map)?;
            OperatorCommand::ReassignRobot {
                robot: RobotId(p.robot),
                object: ObjectId(p.object),
            }
        }
        "SetMode" => {
            let p: SetModePayload = payload(&kind, map)?;
            OperatorCommand::SetMode { mode: p.mode }
        }
        "Ping" => {
            let _: PingPayload = payload(&kind, map)?;
            OperatorCommand::Ping
        }
        _ => return Err(DecodeError::UnknownKind(kind)),
    };
    Ok(CommandMessage { seq, command })
}

pub fn decode_str(text: &str) -> Result<CommandMessage, DecodeError> {
    decode(text.as_bytes())
}

/// Serializes a command for the wire.
pub fn encode(msg: &CommandMessage) -> String {
    let mut map = Map::new();
    map.insert("v".into(), PROTOCOL_VERSION.into());
    map.insert("seq".into(), msg.seq.into());
    map.insert("kind".into(), msg.command.kind().into());
    match &msg.command {
        OperatorCommand::SetGoal { object, goal } => {
            map.insert("object".into(), object.0.into());
            map.insert("x".into(), goal.x.into());
            map.insert("y".into(), goal.y.into());
            map.insert("theta_deg".into(), goal.theta_degrees().into());
        }
        OperatorCommand::MoveRobot { robot, x, y } => {
            map.insert("robot".into(), robot.0.into());
            map.insert("x".into(), (*x).into());
            map.insert("y".into(), (*y).into());
        }
        OperatorCommand::ReassignRobot { robot, object } => {
            map.insert("robot".into(), robot.0.into());
            map.insert("object".into(), object.0.into());
        }
        OperatorCommand::SetMode { mode } => {
            map.insert("mode".into(), mode.to_string().into());
        }
        OperatorCommand::Ping => {}
    }
    Value::Object(map).to_string()
}

/// Enforces strictly increasing sequence numbers on one connection.
#[derive(Debug, Default, Clone)]
pub struct SeqTracker {
    last: Option<u64>,
}

impl SeqTracker {
    pub fn check(&mut self, seq: u64) -> Result<(), DecodeError> {
        if let Some(last) = self.last {
            if seq <= last {
                return Err(DecodeError::Sequence { got: seq, last });
            }
        }
        self.last = Some(seq);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Interaction count of the session after this command.
    pub interactions: u64,
    /// Tick boundary at which the command was applied.
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ServerMessage {
    Ack(Ack),
    Error(ErrorReply),
    Snapshot(Snapshot),
}

impl ServerMessage {
    pub fn encode(&self) -> String {
        let mut value = serde_json::to_value(self).expect("server messages always serialize");
        if let Value::Object(map) = &mut value {
            map.insert("v".into(), PROTOCOL_VERSION.into());
        }
        value.to_string()
    }

    pub fn decode(text: &str) -> Result<Self, DecodeError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| DecodeError::Json(e.to_string()))?;
        let Value::Object(map) = &mut value else {
            return Err(DecodeError::NotObject);
        };
        match map.remove("v") {
            Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
            Some(v) => return Err(DecodeError::Version(v.to_string())),
            None => return Err(DecodeError::Missing("v")),
        }
        serde_json::from_value(value).map_err(|e| DecodeError::Json(e.to_string()))
    }
}

/// Best-effort extraction of `seq` from a frame that failed to decode, so
/// the error reply can refer to it.
pub fn salvage_seq(bytes: &[u8]) -> Option<u64> {
    serde_json::from_slice::<Value>(bytes)
        .ok()?
        .get("seq")?
        .as_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn set_goal_degrees_become_radians() {
        let msg = decode_str(
            r#"{"v":1,"seq":1,"kind":"SetGoal","object":1,"x":0.0,"y":-1.0,"theta_deg":152}"#,
        )
        .unwrap();
        let OperatorCommand::SetGoal { object, goal } = msg.command else {
            panic!("wrong kind");
        };
        assert_eq!(object, ObjectId(1));
        assert_eq!(goal.x, 0.0);
        assert_eq!(goal.y, -1.0);
        assert!((goal.theta - 152.0 * PI / 180.0).abs() < 1e-12);
    }

    #[test]
    fn theta_540_normalizes_to_180() {
        let msg = decode_str(
            r#"{"v":1,"seq":1,"kind":"SetGoal","object":1,"x":0,"y":0,"theta_deg":540}"#,
        )
        .unwrap();
        let OperatorCommand::SetGoal { goal, .. } = msg.command else {
            panic!("wrong kind");
        };
        assert!((goal.theta - PI).abs() < 1e-12);
    }

    #[test]
    fn empty_and_malformed() {
        assert_eq!(decode(b""), Err(DecodeError::Empty));
        assert_eq!(decode(b"  \n"), Err(DecodeError::Empty));
        assert!(matches!(decode(b"{"), Err(DecodeError::Json(_))));
        assert_eq!(decode(b"[1]"), Err(DecodeError::NotObject));
        assert_eq!(
            decode(br#"{"seq":1,"kind":"Ping"}"#),
            Err(DecodeError::Missing("v"))
        );
        assert!(matches!(
            decode(br#"{"v":2,"seq":1,"kind":"Ping"}"#),
            Err(DecodeError::Version(_))
        ));
        assert!(matches!(
            decode(br#"{"v":1,"seq":-1,"kind":"Ping"}"#),
            Err(DecodeError::BadField { field: "seq", .. })
        ));
        assert_eq!(
            decode(br#"{"v":1,"seq":1,"kind":"Teleport"}"#),
            Err(DecodeError::UnknownKind("Teleport".into()))
        );
    }

    #[test]
    fn strict_payloads() {
        // extra field
        assert!(matches!(
            decode(br#"{"v":1,"seq":1,"kind":"Ping","x":1}"#),
            Err(DecodeError::Payload { .. })
        ));
        // missing field
        assert!(matches!(
            decode(br#"{"v":1,"seq":1,"kind":"MoveRobot","robot":1,"x":1}"#),
            Err(DecodeError::Payload { .. })
        ));
        // wrong type
        assert!(matches!(
            decode(br#"{"v":1,"seq":1,"kind":"ReassignRobot","robot":"a","object":1}"#),
            Err(DecodeError::Payload { .. })
        ));
        assert!(matches!(
            decode(br#"{"v":1,"seq":1,"kind":"SetMode","mode":"free"}"#),
            Err(DecodeError::Payload { .. })
        ));
    }

    #[test]
    fn sequence_must_increase() {
        let mut t = SeqTracker::default();
        t.check(1).unwrap();
        t.check(5).unwrap();
        assert_eq!(t.check(5), Err(DecodeError::Sequence { got: 5, last: 5 }));
        assert!(t.check(2).is_err());
        t.check(6).unwrap();
    }

    #[test]
    fn server_message_round_trip() {
        let ack = ServerMessage::Ack(Ack {
            seq: 3,
            accepted: false,
            outcome: None,
            reason: Some("nope".into()),
            interactions: 2,
            tick: 40,
        });
        let text = ack.encode();
        assert!(text.contains(r#""kind":"Ack""#));
        assert!(text.contains(r#""v":1"#));
        assert_eq!(ServerMessage::decode(&text).unwrap(), ack);
        assert_eq!(salvage_seq(br#"{"seq":4,"kind":"??"}"#), Some(4));
    }

    fn arb_command() -> impl Strategy<Value = OperatorCommand> {
        let coord = -10.0f64..10.0;
        prop_oneof![
            (0u32..1000, coord.clone(), coord.clone(), -720.0f64..720.0).prop_map(
                |(o, x, y, t)| {
                    OperatorCommand::SetGoal {
                        object: ObjectId(o),
                        goal: Pose2D::from_degrees(x, y, t),
                    }
                }
            ),
            (0u32..1000, coord.clone(), coord).prop_map(|(r, x, y)| OperatorCommand::MoveRobot {
                robot: RobotId(r),
                x,
                y
            }),
            (0u32..1000, 0u32..1000).prop_map(|(r, o)| OperatorCommand::ReassignRobot {
                robot: RobotId(r),
                object: ObjectId(o)
            }),
            prop_oneof![
                Just(InteractionMode::RobotOnly),
                Just(InteractionMode::Combined)
            ]
            .prop_map(|mode| OperatorCommand::SetMode { mode }),
            Just(OperatorCommand::Ping),
        ]
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(seq in any::<u64>(), command in arb_command()) {
            let msg = CommandMessage { seq, command };
            let back = decode_str(&encode(&msg)).unwrap();
            prop_assert_eq!(back.seq, msg.seq);
            match (&back.command, &msg.command) {
                (
                    OperatorCommand::SetGoal { object: a, goal: ga },
                    OperatorCommand::SetGoal { object: b, goal: gb },
                ) => {
                    prop_assert_eq!(a, b);
                    prop_assert_eq!(ga.x, gb.x);
                    prop_assert_eq!(ga.y, gb.y);
                    // degrees and back costs at most a few ulps
                    prop_assert!(cotransport_core::pose::angle_diff(ga.theta, gb.theta).abs() < 1e-12);
                    prop_assert!(ga.theta > -PI && ga.theta <= PI);
                }
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
