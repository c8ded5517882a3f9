//! In-process operator session: every scripted command is encoded to a
//! wire frame and fed through the same decode/apply path as a socket
//! client would use.

use cotransport_core::orchestrator::{OperatorCommand, OrchestratorEvent};
use cotransport_core::sim::Simulation;
use cotransport_server::protocol::{self, Ack, CommandMessage, SeqTracker, ServerMessage};
use cotransport_server::session::Session;

use crate::HarnessError;

#[derive(Debug)]
pub struct Driver {
    session: Session,
    seqs: SeqTracker,
    next_seq: u64,
    events: Vec<OrchestratorEvent>,
    check_invariants: bool,
}

impl Driver {
    pub fn new(sim: Simulation) -> Self {
        Self {
            session: Session::new(sim),
            seqs: SeqTracker::default(),
            next_seq: 1,
            events: Vec::new(),
            check_invariants: true,
        }
    }

    pub fn sim(&self) -> &Simulation {
        self.session.sim()
    }

    pub fn sim_mut(&mut self) -> &mut Simulation {
        self.session.sim_mut()
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Interaction count as reported by the server session.
    pub fn interactions(&self) -> u64 {
        self.session.interaction_count()
    }

    /// Every event seen so far.
    pub fn events(&self) -> &[OrchestratorEvent] {
        &self.events
    }

    pub fn time(&self) -> f64 {
        self.sim().time()
    }

    /// Sends one command over the wire path and returns its acknowledgement.
    pub fn send(&mut self, command: OperatorCommand) -> Result<Ack, HarnessError> {
        let frame = protocol::encode(&CommandMessage {
            seq: self.next_seq,
            command,
        });
        self.next_seq += 1;
        let reply = self.session.handle_frame(frame.as_bytes(), &mut self.seqs);
        self.events
            .extend(self.session.sim_mut().orchestrator_mut().take_events());
        match reply {
            ServerMessage::Ack(ack) => Ok(ack),
            ServerMessage::Error(e) => Err(HarnessError::Protocol(e.reason)),
            ServerMessage::Snapshot(_) => Err(HarnessError::Protocol("unexpected snapshot".into())),
        }
    }

    /// Like [`Driver::send`] but treats a rejection as an error.
    pub fn send_accepted(&mut self, command: OperatorCommand) -> Result<Ack, HarnessError> {
        let kind = command.kind();
        let ack = self.send(command)?;
        if ack.accepted {
            Ok(ack)
        } else {
            Err(HarnessError::Rejected {
                kind,
                reason: ack.reason.unwrap_or_default(),
            })
        }
    }

    /// Advances one tick and returns the events it produced.
    pub fn step(&mut self) -> Result<Vec<OrchestratorEvent>, HarnessError> {
        self.session.tick()?;
        let fresh = self.session.sim_mut().orchestrator_mut().take_events();
        if self.check_invariants {
            let sim = self.session.sim();
            sim.orchestrator()
                .check_invariants(sim.world())
                .map_err(HarnessError::Invariant)?;
        }
        self.events.extend(fresh.iter().cloned());
        Ok(fresh)
    }
}
