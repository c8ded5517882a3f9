//! WebSocket front end: one thread per connection, each interleaving
//! command reads with snapshot sends at a fixed rate.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::engine::EngineHandle;
use crate::protocol::{self, ErrorReply, SeqTracker, ServerMessage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    /// Snapshots per second sent to each client.
    pub snapshot_rate: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            snapshot_rate: 10.0,
        }
    }
}

/// Accepts connections until the engine stops.
pub fn serve(
    listener: TcpListener,
    engine: EngineHandle,
    cfg: StreamConfig,
) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    while !engine.is_stopped() {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client connected from {peer}");
                let engine = engine.clone();
                thread::Builder::new()
                    .name(format!("client-{peer}"))
                    .spawn(move || {
                        if let Err(e) = handle_connection(stream, engine, cfg) {
                            log::info!("client {peer} closed: {e}");
                        }
                    })?;
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> tungstenite::Result<()> {
    ws.send(Message::text(msg.encode()))
}

fn handle_connection(
    stream: TcpStream,
    engine: EngineHandle,
    cfg: StreamConfig,
) -> tungstenite::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::Io(std::io::Error::new(
            ErrorKind::WouldBlock,
            "handshake interrupted",
        )),
    })?;
    let period = Duration::from_secs_f64(1.0 / cfg.snapshot_rate.max(1e-3));
    let poll = period.min(Duration::from_millis(20));
    ws.get_ref().set_read_timeout(Some(poll))?;

    let mut seqs = SeqTracker::default();
    let mut next_snapshot = Instant::now();
    let mut last_tick = None;
    loop {
        if Instant::now() >= next_snapshot {
            let snapshot = engine.latest();
            // an unchanged tick is not worth resending
            if last_tick != Some(snapshot.tick) {
                last_tick = Some(snapshot.tick);
                send(&mut ws, &ServerMessage::Snapshot((*snapshot).clone()))?;
            }
            next_snapshot += period;
            if next_snapshot < Instant::now() {
                // a slow link skips ahead instead of building a backlog
                next_snapshot = Instant::now() + period;
            }
        }
        let frame = match ws.read() {
            Ok(Message::Text(text)) => text.as_bytes().to_vec(),
            Ok(Message::Binary(data)) => data.to_vec(),
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => continue,
            Err(e) if is_timeout(&e) => continue,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e),
        };
        let reply = match protocol::decode(&frame).and_then(|m| seqs.check(m.seq).map(|_| m)) {
            Ok(msg) => match engine.submit(msg) {
                Ok(ack) => ServerMessage::Ack(ack),
                Err(e) => ServerMessage::Error(ErrorReply {
                    seq: protocol::salvage_seq(&frame),
                    reason: e.to_string(),
                }),
            },
            Err(e) => ServerMessage::Error(ErrorReply {
                seq: protocol::salvage_seq(&frame),
                reason: e.to_string(),
            }),
        };
        send(&mut ws, &reply)?;
    }
}
