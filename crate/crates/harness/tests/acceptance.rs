//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cotransport_core::config::SimConfig;
use cotransport_core::fsm::{deploy_radius, deployment_positions, goal_bearing};
use cotransport_core::geometry::strictly_inside_hull;
use cotransport_core::ids::ObjectId;
use cotransport_core::orchestrator::InteractionMode;
use cotransport_core::pose::{angle_diff, bearing, Pose2D};
use cotransport_core::world::{integrate_unicycle, ObjectState};
use cotransport_harness::experiments::{
    run_exp1, run_exp2, run_faults, study_trial, StudyPolicy, TrialOutcome, TrialRecord,
};
use cotransport_harness::properties::{check_scenario, random_scenario, GEOMETRY_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn outcome_ok(o: &TrialOutcome) -> Result<(), String> {
    ensure(o.ok(), || o.failures.join("; "))
}

fn rows<'a>(o: &'a TrialOutcome, experiment: &str, object: u32) -> Vec<&'a TrialRecord> {
    o.records
        .iter()
        .filter(|r| r.experiment == experiment && r.object == ObjectId(object))
        .collect()
}

fn exp1_reproduction() -> Verdict {
    let cfg = SimConfig::default();
    let started = Instant::now();
    let out = run_exp1(&cfg, 10, 1).map_err(|e| e.to_string())?;
    let wall = started.elapsed();
    outcome_ok(&out)?;
    let recs = rows(&out, "exp1", 1);
    ensure(recs.len() == 10, || format!("{} records", recs.len()))?;
    for r in &recs {
        ensure(r.completed, || format!("trial {} incomplete", r.trial))?;
        ensure(r.err_x.abs() <= 0.05 && r.err_y.abs() <= 0.05, || {
            format!(
                "trial {} position error ({:.4}, {:.4})",
                r.trial, r.err_x, r.err_y
            )
        })?;
        ensure(r.err_theta_deg.abs() <= 2.0, || {
            format!("trial {} heading error {:.3} deg", r.trial, r.err_theta_deg)
        })?;
        let t = r.completion_time.unwrap_or(f64::NAN);
        ensure((30.0..=600.0).contains(&t), || {
            format!("trial {} took {t} s", r.trial)
        })?;
    }
    ensure(wall < Duration::from_secs(60), || {
        format!("wall clock {wall:?}")
    })?;
    let worst = |f: fn(&TrialRecord) -> f64| recs.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
    let times: Vec<f64> = recs.iter().filter_map(|r| r.completion_time).collect();
    Ok(format!(
        "10/10 complete, max |err| x {:.4} m y {:.4} m theta {:.3} deg, times {:.1}..{:.1} s, wall {:.2} s",
        worst(|r| r.err_x),
        worst(|r| r.err_y),
        worst(|r| r.err_theta_deg),
        times.iter().cloned().fold(f64::INFINITY, f64::min),
        times.iter().cloned().fold(0.0, f64::max),
        wall.as_secs_f64()
    ))
}

fn exp2_reproduction() -> Verdict {
    let cfg = SimConfig::default();
    let out = run_exp2(&cfg, 10, 1).map_err(|e| e.to_string())?;
    outcome_ok(&out)?;
    let first = rows(&out, "exp2", 1);
    let second = rows(&out, "exp2", 2);
    ensure(first.len() == 10 && second.len() == 10, || {
        "missing exp2 rows".into()
    })?;
    for (a, b) in first.iter().zip(&second) {
        let (c1, re, c2) = (a.completion_time, b.reassignment_time, b.completion_time);
        match (c1, re, c2) {
            (Some(c1), Some(re), Some(c2)) if c1 < re && re < c2 => {}
            other => return Err(format!("trial {}: {other:?}", a.trial)),
        }
    }
    let control = rows(&out, "exp2_control", 2);
    ensure(control.len() == 10, || "missing control rows".into())?;
    for r in &control {
        ensure(!r.completed && r.ticks >= 6000, || {
            format!("control trial {} completed object 2", r.trial)
        })?;
    }
    Ok("ordering holds in 10/10 trials; control never completes object 2 in 600 s".into())
}

fn interaction_counts() -> Verdict {
    let cfg = SimConfig::default();
    let mut robot_only_min = u64::MAX;
    for seed in 1..=10u64 {
        let trial = (seed - 1) as usize;
        let c = study_trial(
            &cfg,
            trial,
            seed,
            InteractionMode::Combined,
            StudyPolicy::Goal,
        )
        .map_err(|e| e.to_string())?;
        let r = study_trial(
            &cfg,
            trial,
            seed,
            InteractionMode::RobotOnly,
            StudyPolicy::Waypoints,
        )
        .map_err(|e| e.to_string())?;
        outcome_ok(&c)?;
        outcome_ok(&r)?;
        let (a, b) = (c.records[0].interactions, r.records[0].interactions);
        ensure(a == 1, || format!("seed {seed}: combined used {a}"))?;
        ensure(b >= 8, || format!("seed {seed}: robot-only used {b}"))?;
        ensure(a < b, || format!("seed {seed}: {a} !< {b}"))?;
        robot_only_min = robot_only_min.min(b);
    }
    let idle = study_trial(&cfg, 0, 1, InteractionMode::RobotOnly, StudyPolicy::Idle)
        .map_err(|e| e.to_string())?;
    ensure(!idle.records[0].completed, || {
        "an idle operator completed the task".into()
    })?;
    Ok(format!(
        "combined 1 on seeds 1..10, robot-only >= {robot_only_min}, idle operator fails"
    ))
}

fn slot_geometry_cases(cases: u64) -> Result<(), String> {
    let p = SimConfig::default().controller;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..cases {
        let object = ObjectState::new(
            ObjectId(1),
            Pose2D::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-PI..PI),
            ),
            rng.gen_range(0.05..0.4),
            1,
        );
        let goal = Pose2D::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0);
        let robot_radius = rng.gen_range(0.03..0.15);
        let n = rng.gen_range(1..=12);
        let slots =
            deployment_positions(&object, n, robot_radius, &p, &goal).map_err(|e| e.to_string())?;
        let radius = deploy_radius(&object, robot_radius, &p);
        let c = object.position();
        let back = goal_bearing(&object, &goal) + PI;
        ensure(
            angle_diff(bearing(&(slots[0].position() - c)), back).abs() <= GEOMETRY_TOL,
            || format!("case {case}: slot 0 not opposite the goal"),
        )?;
        for (i, s) in slots.iter().enumerate() {
            let d = s.position() - c;
            ensure((d.norm() - radius).abs() <= GEOMETRY_TOL, || {
                format!("case {case}: slot {i} radius")
            })?;
            ensure(
                angle_diff(s.theta, bearing(&(-d))).abs() <= GEOMETRY_TOL,
                || format!("case {case}: slot {i} does not face the object"),
            )?;
            if n > 1 {
                let next = slots[(i + 1) % n].position() - c;
                let gap = angle_diff(bearing(&next), bearing(&d)).rem_euclid(TAU);
                ensure((gap - TAU / n as f64).abs() <= GEOMETRY_TOL, || {
                    format!("case {case}: gap {i} is {gap}")
                })?;
            }
        }
        if n >= 3 {
            let pts: Vec<_> = slots.iter().map(|s| s.position()).collect();
            ensure(strictly_inside_hull(&pts, &c), || {
                format!("case {case}: not caged")
            })?;
        }
    }
    Ok(())
}

fn fsm_properties() -> Verdict {
    slot_geometry_cases(1000)?;
    let cfg = SimConfig::default();
    let mut completed = 0;
    let mut caged = 0;
    let mut transitions = 0;
    for seed in 0..1000 {
        let spec = random_scenario(seed);
        let report = check_scenario(&cfg, &spec).map_err(|e| e.to_string())?;
        completed += usize::from(report.completed);
        caged += usize::from(report.caged_ticks > 0);
        transitions += report.transitions;
    }
    Ok(format!(
        "1000 scenarios, {transitions} legal transitions, {caged} caged formations, {completed} completions within tolerance; 1000 slot layouts exact to 1e-9"
    ))
}

fn fault_recovery() -> Verdict {
    let cfg = SimConfig::default();
    let out = run_faults(&cfg, 10, 1).map_err(|e| e.to_string())?;
    outcome_ok(&out)?;
    let push = rows(&out, "faults_push", 1);
    let suspend = rows(&out, "faults_suspend", 1);
    ensure(push.len() == 10 && push.iter().all(|r| r.completed), || {
        "push fault".into()
    })?;
    ensure(
        suspend.len() == 10 && suspend.iter().all(|r| r.completed),
        || "suspension".into(),
    )?;
    Ok(
        "10/10 complete after a mid-push failure; 10/10 suspend then complete after reassignment"
            .into(),
    )
}

fn determinism() -> Verdict {
    let exe = env!("CARGO_BIN_EXE_cotransport-harness");
    let base = std::env::temp_dir().join(format!("cotransport-acceptance-{}", std::process::id()));
    let run = |name: &str, dir: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(exe)
            .args([name, "--trials", "3", "--seed", "7", "--out"])
            .arg(dir)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!(
                "{name} exited with {}: {}",
                status.status,
                String::from_utf8_lossy(&status.stderr)
            )
        })?;
        std::fs::read(dir.join(format!("{name}.csv"))).map_err(|e| e.to_string())
    };
    let mut sizes = Vec::new();
    for name in ["exp1", "exp2", "study", "faults"] {
        let a = run(name, &base.join("a"))?;
        let b = run(name, &base.join("b"))?;
        ensure(a == b, || format!("{name}: CSV bytes differ"))?;
        sizes.push(format!("{name} {} B", a.len()));
    }
    let _ = std::fs::remove_dir_all(&base);
    Ok(format!(
        "identical CSV bytes across two runs: {}",
        sizes.join(", ")
    ))
}

/// Forward Euler with a very small step.
fn euler(x: f64, y: f64, theta: f64, v: f64, omega: f64, t: f64, steps: usize) -> (f64, f64) {
    let h = t / steps as f64;
    let (mut x, mut y, mut th) = (x, y, theta);
    for _ in 0..steps {
        x += v * th.cos() * h;
        y += v * th.sin() * h;
        th += omega * h;
    }
    (x, y)
}

fn kinematics_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let start = Pose2D::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-PI..PI),
        );
        let v = rng.gen_range(-0.5..0.5);
        let omega = if rng.gen_bool(0.05) {
            0.0
        } else {
            rng.gen_range(-3.0..3.0)
        };
        let exact = integrate_unicycle(start, v, omega, 1.0).map_err(|e| e.to_string())?;
        let (ex, ey) = euler(start.x, start.y, start.theta, v, omega, 1.0, 10_000);
        worst = worst.max((exact.x - ex).hypot(exact.y - ey));
    }
    ensure(worst <= 1e-3, || format!("worst deviation {worst:.3e} m"))?;
    Ok(format!(
        "10000 commands over 1 s, worst deviation {worst:.2e} m"
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("experiment_1_reproduction", exp1_reproduction),
        ("experiment_2_reproduction", exp2_reproduction),
        ("interaction_counts", interaction_counts),
        ("fsm_property_suite", fsm_properties),
        ("fault_recovery", fault_recovery),
        ("determinism", determinism),
        ("kinematics_oracle", kinematics_oracle),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let verdict = check();
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
