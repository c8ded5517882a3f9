use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use cotransport_core::audit::count_interactions;
use cotransport_core::config::SimConfig;
use cotransport_core::sim::Scenario;
use cotransport_server::engine::{Engine, EngineConfig, EngineHandle};
use cotransport_server::protocol::ServerMessage;
use cotransport_server::session::Session;
use cotransport_server::snapshot::Snapshot;
use cotransport_server::ws::{self, StreamConfig};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

const SCENARIO: &str = r#"
[[robots]]
id = 1
x = -1.0
y = 1.2
[[robots]]
id = 2
x = -0.3
y = 1.2
[[robots]]
id = 3
x = 0.3
y = 1.2
[[robots]]
id = 4
x = 1.0
y = 1.2
[[objects]]
id = 1
x = 0.0
y = 0.0
min_robots = 2
"#;

fn start(rtf: f64, rate: f64) -> (Engine, String) {
    let sim = Scenario::from_toml_str(SCENARIO)
        .unwrap()
        .build(SimConfig::default())
        .unwrap();
    let engine = Engine::spawn(
        Session::new(sim),
        EngineConfig {
            real_time_factor: rtf,
            max_ticks: None,
        },
    );
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = engine.handle();
    thread::spawn(move || {
        ws::serve(
            listener,
            handle,
            StreamConfig {
                snapshot_rate: rate,
            },
        )
    });
    (engine, format!("ws://{addr}"))
}

fn connect(url: &str) -> Client {
    let (client, _) = tungstenite::connect(url).unwrap();
    if let MaybeTlsStream::Plain(s) = client.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    client
}

fn read(client: &mut Client) -> ServerMessage {
    loop {
        match client.read().unwrap() {
            Message::Text(t) => return ServerMessage::decode(t.as_str()).unwrap(),
            _ => continue,
        }
    }
}

/// Sends a frame and returns the first non-snapshot reply.
fn request(client: &mut Client, frame: &str) -> ServerMessage {
    client.send(Message::text(frame.to_string())).unwrap();
    loop {
        match read(client) {
            ServerMessage::Snapshot(_) => continue,
            other => return other,
        }
    }
}

fn snapshots_for(client: &mut Client, window: Duration, engine: &EngineHandle) -> Vec<Snapshot> {
    let mut out = Vec::new();
    let mut start = None;
    loop {
        if let ServerMessage::Snapshot(s) = read(client) {
            let now = Instant::now();
            let t0 = *start.get_or_insert(now);
            if now - t0 >= window {
                return out;
            }
            assert!(s.tick <= engine.latest().tick, "snapshot from the future");
            out.push(s);
        }
    }
}

#[test]
fn snapshots_fan_out_at_the_configured_rate() {
    let (engine, url) = start(1.0, 10.0);
    let handle = engine.handle();
    let mut a = connect(&url);
    let mut b = connect(&url);
    let hb = handle.clone();
    let tb = thread::spawn(move || snapshots_for(&mut b, Duration::from_secs(2), &hb));
    let sa = snapshots_for(&mut a, Duration::from_secs(2), &handle);
    let sb = tb.join().unwrap();
    for seen in [&sa, &sb] {
        assert!(seen.windows(2).all(|w| w[0].tick <= w[1].tick));
        // one simulated second starting at the first snapshot
        let t0 = seen[0].time;
        let in_second = seen.iter().filter(|s| s.time < t0 + 1.0 - 1e-9).count();
        assert!(
            (1..=10).contains(&in_second),
            "got {in_second} snapshots in 1 s of sim"
        );
        assert!(seen.iter().all(|s| s.is_consistent()));
    }
    // same tick, same payload on both connections
    for s in &sa {
        if let Some(o) = sb.iter().find(|o| o.tick == s.tick) {
            assert_eq!(s, o);
        }
    }
    // nothing moves without a task: consecutive payloads differ only in tick and time
    let mut first = sa[0].clone();
    let mut last = sa[sa.len() - 1].clone();
    first.tick = 0;
    first.time = 0.0;
    last.tick = 0;
    last.time = 0.0;
    assert_eq!(first, last);
    engine.shutdown();
}

#[test]
fn commands_are_acknowledged_and_counted() {
    let (engine, url) = start(0.0, 20.0);
    let mut c = connect(&url);

    let ServerMessage::Ack(ack) = request(
        &mut c,
        r#"{"v":1,"seq":1,"kind":"SetGoal","object":1,"x":0.0,"y":-1.0,"theta_deg":152}"#,
    ) else {
        panic!("expected ack")
    };
    assert!(ack.accepted);
    assert_eq!(ack.interactions, 1);

    let ServerMessage::Ack(ack) = request(&mut c, r#"{"v":1,"seq":2,"kind":"Ping"}"#) else {
        panic!("expected ack")
    };
    assert!(ack.accepted);
    assert_eq!(ack.interactions, 1);

    // malformed frame: error reply, connection stays usable
    assert!(matches!(
        request(&mut c, "{not json"),
        ServerMessage::Error(_)
    ));
    let ServerMessage::Error(e) = request(&mut c, r#"{"v":1,"seq":2,"kind":"Ping"}"#) else {
        panic!("expected sequence error")
    };
    assert_eq!(e.seq, Some(2));

    let ServerMessage::Ack(ack) = request(
        &mut c,
        r#"{"v":1,"seq":3,"kind":"SetGoal","object":1,"x":1.0,"y":-1.0,"theta_deg":0}"#,
    ) else {
        panic!("expected ack")
    };
    assert!(!ack.accepted);
    assert_eq!(ack.interactions, 1);

    let ServerMessage::Ack(ack) = request(
        &mut c,
        r#"{"v":1,"seq":4,"kind":"MoveRobot","robot":9,"x":0,"y":0}"#,
    ) else {
        panic!("expected ack")
    };
    assert!(!ack.accepted);

    let ServerMessage::Ack(ack) = request(
        &mut c,
        r#"{"v":1,"seq":5,"kind":"SetMode","mode":"robot_only"}"#,
    ) else {
        panic!("expected ack")
    };
    assert!(ack.accepted);
    assert_eq!(ack.interactions, 2);

    drop(c);
    let session = engine.shutdown();
    let audit = session.sim().orchestrator().audit().records();
    assert_eq!(audit.len(), 5);
    assert_eq!(count_interactions(audit), session.interaction_count());
    assert_eq!(session.interaction_count(), 2);
}

#[test]
fn a_disconnecting_client_does_not_disturb_others() {
    let (engine, url) = start(0.0, 20.0);
    let handle = engine.handle();
    let mut a = connect(&url);
    let b = connect(&url);
    drop(b);
    let seen = snapshots_for(&mut a, Duration::from_millis(300), &handle);
    assert!(!seen.is_empty());
    let ServerMessage::Ack(ack) = request(&mut a, r#"{"v":1,"seq":1,"kind":"Ping"}"#) else {
        panic!("expected ack")
    };
    assert!(ack.accepted);
    engine.shutdown();
}
