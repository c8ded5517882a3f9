//! Line-delimited JSON audit log of operator commands.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ids::RobotId;
use crate::orchestrator::OperatorCommand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditRecord {
    /// One operator command, accepted or not.
    Command {
        tick: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        command: OperatorCommand,
        accepted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        /// Whether this record counts as an operator interaction.
        counted: bool,
    },
    /// A relocation order abandoned after its time budget ran out.
    RelocationTimeout { tick: u64, robot: RobotId },
}

impl AuditRecord {
    pub fn tick(&self) -> u64 {
        match self {
            AuditRecord::Command { tick, .. } | AuditRecord::RelocationTimeout { tick, .. } => {
                *tick
            }
        }
    }

    pub fn is_counted(&self) -> bool {
        matches!(self, AuditRecord::Command { counted: true, .. })
    }
}

/// In-memory audit log with an optional line-by-line sink.
#[derive(Default)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditLog")
            .field("records", &self.records.len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mirrors every future record to `sink` as one JSON line.
    pub fn with_sink(sink: Box<dyn Write + Send>) -> Self {
        Self {
            records: Vec::new(),
            sink: Some(sink),
        }
    }

    pub fn set_sink(&mut self, sink: Box<dyn Write + Send>) {
        self.sink = Some(sink);
    }

    pub fn push(&mut self, record: AuditRecord) -> io::Result<()> {
        let result = match self.sink.as_mut() {
            Some(sink) => {
                let line = serde_json::to_string(&record).map_err(io::Error::other)?;
                writeln!(sink, "{line}").and_then(|_| sink.flush())
            }
            None => Ok(()),
        };
        self.records.push(record);
        result
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    /// Number of accepted, counted commands.
    pub fn interaction_count(&self) -> u64 {
        count_interactions(&self.records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("audit records always serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn count_interactions(records: &[AuditRecord]) -> u64 {
    records.iter().filter(|r| r.is_counted()).count() as u64
}

/// Parses a JSONL audit log. Blank lines are skipped.
pub fn read_jsonl(reader: impl BufRead) -> io::Result<Vec<AuditRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ObjectId;
    use crate::pose::Pose2D;
    use std::sync::{Arc, Mutex};

    #[derive(Clone, Default)]
    struct Shared(Arc<Mutex<Vec<u8>>>);

    impl Write for Shared {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn jsonl_round_trip_and_count() {
        let buf = Shared::default();
        let mut log = AuditLog::with_sink(Box::new(buf.clone()));
        log.push(AuditRecord::Command {
            tick: 0,
            seq: Some(1),
            command: OperatorCommand::SetGoal {
                object: ObjectId(1),
                goal: Pose2D::new(0.0, -1.0, 1.0),
            },
            accepted: true,
            reason: None,
            counted: true,
        })
        .unwrap();
        log.push(AuditRecord::Command {
            tick: 3,
            seq: Some(2),
            command: OperatorCommand::Ping,
            accepted: true,
            reason: None,
            counted: false,
        })
        .unwrap();
        log.push(AuditRecord::RelocationTimeout {
            tick: 9,
            robot: RobotId(2),
        })
        .unwrap();
        assert_eq!(log.interaction_count(), 1);
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        assert_eq!(text, log.to_jsonl());
        assert_eq!(text.lines().count(), 3);
        let parsed = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(parsed, log.records());
    }
}
