//! Runs a [`Session`] on its own thread.
//!
//! Connections talk to it through an ordered mailbox; each command is
//! applied at the next tick boundary and acknowledged from the simulation
//! thread, so the acknowledged interaction count always matches the audit
//! log. After every tick the latest snapshot is published to a
//! [`SnapshotBuffer`].

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{Ack, CommandMessage};
use crate::session::Session;
use crate::snapshot::{Snapshot, SnapshotBuffer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("simulation is not running")]
    Stopped,
    #[error("no acknowledgement within {0:?}")]
    Timeout(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// 1.0 paces ticks at wall-clock speed, 0 runs as fast as possible.
    pub real_time_factor: f64,
    /// Stop after this many ticks.
    pub max_ticks: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            real_time_factor: 1.0,
            max_ticks: None,
        }
    }
}

struct Request {
    msg: CommandMessage,
    reply: Sender<Ack>,
}

/// Cloneable handle used by connection threads.
#[derive(Clone)]
pub struct EngineHandle {
    mailbox: Sender<Request>,
    snapshots: SnapshotBuffer,
    stop: Arc<AtomicBool>,
}

const ACK_TIMEOUT: Duration = Duration::from_secs(10);

impl EngineHandle {
    /// Queues a command and waits for its acknowledgement.
    pub fn submit(&self, msg: CommandMessage) -> Result<Ack, EngineError> {
        let (reply, ack) = mpsc::channel();
        self.mailbox
            .send(Request { msg, reply })
            .map_err(|_| EngineError::Stopped)?;
        match ack.recv_timeout(ACK_TIMEOUT) {
            Ok(a) => Ok(a),
            Err(RecvTimeoutError::Timeout) => Err(EngineError::Timeout(ACK_TIMEOUT)),
            Err(RecvTimeoutError::Disconnected) => Err(EngineError::Stopped),
        }
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.snapshots.latest()
    }

    pub fn snapshots(&self) -> &SnapshotBuffer {
        &self.snapshots
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }
}

pub struct Engine {
    handle: EngineHandle,
    thread: JoinHandle<Session>,
}

impl Engine {
    pub fn spawn(session: Session, cfg: EngineConfig) -> Self {
        let (tx, rx) = mpsc::channel();
        let snapshots = SnapshotBuffer::new(session.snapshot());
        let stop = Arc::new(AtomicBool::new(false));
        let handle = EngineHandle {
            mailbox: tx,
            snapshots: snapshots.clone(),
            stop: stop.clone(),
        };
        let thread = thread::Builder::new()
            .name("simulation".into())
            .spawn(move || run(session, cfg, rx, snapshots, stop))
            .expect("spawning the simulation thread");
        Self { handle, thread }
    }

    pub fn handle(&self) -> EngineHandle {
        self.handle.clone()
    }

    /// Stops the loop and returns the session.
    pub fn shutdown(self) -> Session {
        self.handle.stop();
        self.join()
    }

    /// Waits for the loop to end on its own (tick limit or stop flag).
    pub fn join(self) -> Session {
        self.thread.join().expect("simulation thread panicked")
    }
}

fn drain(session: &mut Session, rx: &Receiver<Request>) {
    loop {
        match rx.try_recv() {
            Ok(req) => {
                let ack = session.apply(&req.msg);
                // the requester may have given up; nothing to do then
                let _ = req.reply.send(ack);
            }
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => return,
        }
    }
}

fn run(
    mut session: Session,
    cfg: EngineConfig,
    rx: Receiver<Request>,
    snapshots: SnapshotBuffer,
    stop: Arc<AtomicBool>,
) -> Session {
    let dt = session.sim().config().world.dt;
    let period = if cfg.real_time_factor > 0.0 {
        Some(Duration::from_secs_f64(dt / cfg.real_time_factor))
    } else {
        None
    };
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        if cfg
            .max_ticks
            .is_some_and(|m| session.sim().tick_count() >= m)
        {
            break;
        }
        drain(&mut session, &rx);
        if let Err(e) = session.tick() {
            log::error!("simulation step failed: {e}");
            break;
        }
        snapshots.publish(session.snapshot());
        if let Some(period) = period {
            next += period;
            let now = Instant::now();
            if next > now {
                thread::sleep(next - now);
            } else {
                next = now;
            }
        }
    }
    // answer whatever is still queued so no client hangs
    drain(&mut session, &rx);
    stop.store(true, Ordering::SeqCst);
    session
}
