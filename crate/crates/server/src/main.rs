use std::fs::File;
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::PathBuf;
use std::thread;

use anyhow::{Context, Result};
use clap::Parser;
use cotransport_core::config::SimConfig;
use cotransport_core::orchestrator::{InteractionMode, TaskStatus};
use cotransport_core::sim::Scenario;
use cotransport_server::engine::{Engine, EngineConfig};
use cotransport_server::session::Session;
use cotransport_server::ws::{self, StreamConfig};

const DEFAULT_SCENARIO: &str = r#"
[[robots]]
id = 1
x = -1.2
y = 1.2
theta_deg = -90.0

[[robots]]
id = 2
x = -0.4
y = 1.4
theta_deg = -90.0

[[robots]]
id = 3
x = 0.4
y = 1.4
theta_deg = -90.0

[[robots]]
id = 4
x = 1.2
y = 1.2
theta_deg = -90.0

[[objects]]
id = 1
x = 0.0
y = 0.0
min_robots = 2
"#;

/// Collective-transport simulator with a WebSocket command interface.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:9001")]
    listen: String,
    /// Simulation config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction mode, overriding the config file.
    #[arg(long)]
    mode: Option<InteractionMode>,
    /// Scenario file (TOML) with robots, objects, failures and scripted commands.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Run the scenario without opening a socket and print the final snapshot.
    #[arg(long)]
    headless: bool,
    /// Real-time factor: 1.0 paces at wall-clock speed, 0 runs as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    rtf: f64,
    /// Append every command record to this JSONL file.
    #[arg(long)]
    audit_log: Option<PathBuf>,
    /// Snapshots per second sent to each client.
    #[arg(long, default_value_t = 10.0)]
    snapshot_rate: f64,
    /// Stop after this many ticks (headless default: 6000).
    #[arg(long)]
    max_ticks: Option<u64>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let mut cfg = match &args.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    if let Some(mode) = args.mode {
        cfg.orchestrator.mode = mode;
    }
    let scenario = match &args.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::from_toml_str(DEFAULT_SCENARIO)?,
    };
    let mut sim = scenario.build(cfg)?;
    if let Some(path) = &args.audit_log {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        sim.orchestrator_mut()
            .audit_mut()
            .set_sink(Box::new(BufWriter::new(file)));
    }
    let session = Session::new(sim).with_script(&scenario.commands);

    if args.headless {
        return run_headless(session, args.max_ticks.unwrap_or(6000));
    }

    let listener =
        TcpListener::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
    log::info!("listening on ws://{}", listener.local_addr()?);
    let engine = Engine::spawn(
        session,
        EngineConfig {
            real_time_factor: args.rtf,
            max_ticks: args.max_ticks,
        },
    );
    let handle = engine.handle();
    let stream = StreamConfig {
        snapshot_rate: args.snapshot_rate,
    };
    let server = thread::spawn(move || ws::serve(listener, handle, stream));
    let session = engine.join();
    server.join().expect("server thread panicked")?;
    log::info!(
        "stopped at tick {} after {} interactions",
        session.sim().tick_count(),
        session.interaction_count()
    );
    Ok(())
}

fn run_headless(mut session: Session, max_ticks: u64) -> Result<()> {
    while session.sim().tick_count() < max_ticks {
        session.tick()?;
        let orch = session.sim().orchestrator();
        let settled = session.script_pending() == 0
            && !orch.tasks().is_empty()
            && orch
                .tasks()
                .iter()
                .all(|t| matches!(t.status, TaskStatus::Complete | TaskStatus::Cancelled));
        if settled {
            break;
        }
    }
    println!("{}", serde_json::to_string_pretty(&session.snapshot())?);
    Ok(())
}
