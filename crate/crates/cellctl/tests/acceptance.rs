//! Acceptance gate. Runs every primary criterion, prints one PASS/FAIL line
//! each, and exits non-zero if any fails.

mod common;
#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cellctl::apps::binpick::{self, BinPickJob};
use cellctl::config::parse_descriptor;
use cellctl::core::{
    clamp_to_limits, forward_kinematics, inverse_kinematics, jacobian, Command, IkError, JointVector,
    KinematicModel,
};
use cellctl::protocol::Response;
use cellctl::skills::{CancelToken, SkillEnv, SkillRegistry};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Verdict = Result<String, String>;

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn model() -> KinematicModel {
    default_cell().kinematic_model().unwrap()
}

fn sample(rng: &mut ChaCha8Rng, m: &KinematicModel) -> [f64; 6] {
    std::array::from_fn(|i| rng.gen_range(m.joint_min()[i]..=m.joint_max()[i]))
}

fn kinematics_oracle() -> Verdict {
    let start = Instant::now();
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_p, mut worst_r) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = sample(&mut rng, &m);
        let (dp, dr) = oracle::deviation(&forward_kinematics(&m, &JointVector(q)), &oracle::fk(&m, &q));
        worst_p = worst_p.max(dp);
        worst_r = worst_r.max(dr);
    }
    ensure(worst_p <= 1e-10 && worst_r <= 1e-10, || {
        format!("FK deviation {worst_p:.2e} m / {worst_r:.2e} rad")
    })?;
    let mut worst_j = 0.0f64;
    for _ in 0..100 {
        let q = sample(&mut rng, &m);
        let j = jacobian(&m, &JointVector(q));
        let fd = oracle::fd_jacobian(&m, &q, 1e-6);
        for (r, row) in fd.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                worst_j = worst_j.max((j.get(r, c) - v).abs());
            }
        }
    }
    ensure(worst_j <= 1e-5, || format!("Jacobian deviation {worst_j:.2e}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "FK max {worst_p:.1e} m / {worst_r:.1e} rad over 1000; Jacobian max {worst_j:.1e} over 100"
    ))
}

fn ik_round_trip() -> Verdict {
    let start = Instant::now();
    let d = default_cell();
    let m = d.kinematic_model().unwrap();
    let opts = d.ik_options();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ok = 0;
    for n in 0..1000 {
        let q = sample(&mut rng, &m);
        let target = forward_kinematics(&m, &JointVector(q));
        let seed = clamp_to_limits(
            &m,
            &JointVector(std::array::from_fn(|i| q[i] + rng.gen_range(-0.1..=0.1))),
        )
        .0;
        match inverse_kinematics(&m, &target, &seed, &opts) {
            Ok(r) => {
                let (dp, dr) = oracle::deviation(&target, &oracle::fk(&m, r.joints.as_array()));
                ensure(dp <= 1e-4 && dr <= 1e-4, || {
                    format!("case {n}: false success {dp:.2e} m / {dr:.2e} rad")
                })?;
                ensure(m.within_limits(&r.joints), || {
                    format!("case {n}: solution outside limits")
                })?;
                ok += 1;
            }
            Err(IkError::NotConverged { .. }) => {}
            Err(e) => return Err(format!("case {n}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(ok >= 990, || format!("{ok}/1000 converged"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{ok}/1000 converged, all verified against the oracle"))
}

fn backend_swap() -> Verdict {
    let violations = app_dependency_violations(APP_SOURCE);
    ensure(violations.is_empty(), || violations.join("; "))?;
    let job = BinPickJob::from_item_poses(default_cell().scene.unwrap().items.into_iter().map(|i| i.pose));
    let run = |d: &cellctl::config::RobotSystemDescriptor| {
        let robot = connected(d);
        let log = robot.record_commands();
        let r = binpick::run(
            &robot,
            &SkillRegistry::with_builtins(),
            &SkillEnv::from_descriptor(d),
            &job,
            &CancelToken::new(),
            &mut |_| {},
        );
        (r, log.commands())
    };
    let (sim, sim_cmds) = run(&default_cell());
    ensure(sim.succeeded() && sim.outputs["completed"] == 10, || {
        format!("simulated run: {:?}", sim)
    })?;
    let mut d = default_cell();
    ensure(d.activate("loopback"), || "no loopback binding".into())?;
    let (_, lb_cmds) = run(&d);
    let close = Command::SetGripper { open: false };
    let cut = |c: &[Command]| c.iter().position(|x| *x == close).map(|i| c[..=i].to_vec());
    let (a, b) = (cut(&sim_cmds), cut(&lb_cmds));
    ensure(a.is_some() && a == b, || "command prefixes differ".into())?;
    Ok(format!(
        "identical {}-command prefix; application imports only the contract and skills",
        a.unwrap().len()
    ))
}

fn demo_binpick() -> Verdict {
    let run = || {
        let start = Instant::now();
        let o = cli()
            .args([
                "demo",
                "binpick",
                default_path().to_str().unwrap(),
                "--items",
                "10",
                "--seed",
                "42",
            ])
            .output()
            .unwrap();
        (o, start.elapsed())
    };
    let (a, ta) = run();
    let (b, tb) = run();
    ensure(a.status.code() == Some(0), || {
        format!(
            "exit {:?}: {}",
            a.status.code(),
            String::from_utf8_lossy(&a.stderr)
        )
    })?;
    let out = String::from_utf8(a.stdout.clone()).map_err(|e| e.to_string())?;
    ensure(out.contains("\nCOMPLETED 10\n"), || "completed != 10".into())?;
    ensure(
        out.lines().filter(|l| l.starts_with("PLACED ")).count() == 10,
        || "expected 10 PLACED lines".into(),
    )?;
    ensure(a.stdout == b.stdout, || "transcripts differ between runs".into())?;
    let slowest = ta.max(tb);
    ensure(slowest < Duration::from_secs(30), || format!("took {slowest:?}"))?;
    Ok(format!(
        "completed=10, byte-identical transcripts, {:.2} s per run",
        slowest.as_secs_f64()
    ))
}

fn gateway_availability() -> Verdict {
    let (server, _) = serve(&cell_at(1.0));
    let mut c = Client::connect(server.local_addr());
    let malformed: [&[u8]; 10] = [
        b"not json",
        b"\xff\xfe\xfd",
        b"[1,2,3]",
        b"{\"op\":\"status\"}",
        b"{\"id\":-3,\"op\":\"status\"}",
        b"{\"id\":1,\"op\":\"frobnicate\"}",
        b"{\"id\":1,\"op\":\"status\",\"params\":[]}",
        b"{\"id\":1,\"op\":\"move_joints\",\"params\":{\"target\":[1,2]}}",
        b"{\"id\":1,\"op\":\"status\",\"extra\":0}",
        b"",
    ];
    let valid = [
        ("status", json!({})),
        ("read_joints", json!({})),
        ("move_joints", json!({ "target": [0.3, 0.2, 0.4, 0.0, 1.0, 0.0] })),
        ("read_pose", json!({})),
        ("home", json!({})),
        ("list_skills", json!({})),
        ("gripper", json!({ "open": false })),
        ("describe", json!({})),
        ("gripper", json!({ "open": true })),
        ("stop", json!({})),
    ];
    let sub = c.request("subscribe", json!({}));
    ensure(sub.is_ok(), || format!("subscribe failed: {sub:?}"))?;
    let (mut ok, mut err) = (0, 0);
    let mut tally = |r: &Response| if r.is_ok() { ok += 1 } else { err += 1 };
    for i in 0..50 {
        let mut frame = malformed[i % malformed.len()].to_vec();
        frame.push(b'\n');
        c.send_raw(&frame);
        tally(&c.response());
        let (op, params) = &valid[i % valid.len()];
        tally(&c.request(op, params.clone()));
    }
    ensure(ok == 50 && err == 50, || format!("{ok} ok / {err} error"))?;
    let events = c.drain_events(Duration::from_millis(200));
    ensure(events.iter().any(|e| e.payload.status == "Moving"), || {
        "no Moving event".into()
    })?;
    ensure(events.windows(2).all(|w| w[0].seq < w[1].seq), || {
        "seq not strictly increasing".into()
    })?;
    let alive = c.request("status", json!({}));
    ensure(alive.is_ok(), || "connection unusable afterwards".into())?;
    Ok(format!(
        "50 ok / 50 error on one connection; {} events with increasing seq",
        events.len()
    ))
}

fn transparency() -> Verdict {
    let mut scripts = vec![mixed_script()];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = model();
    for _ in 0..5 {
        scripts.push(
            (0..10)
                .map(|_| match rng.gen_range(0..5) {
                    0 => Command::Home,
                    1 => Command::SetGripper {
                        open: rng.gen_bool(0.5),
                    },
                    _ => Command::MoveJoints {
                        target: JointVector(std::array::from_fn(|i| {
                            rng.gen_range(m.joint_min()[i] - 0.3..m.joint_max()[i] + 0.3)
                        })),
                        speed_fraction: rng.gen_range(0.0..1.1),
                    },
                })
                .collect(),
        );
    }
    let mut worst = 0.0f64;
    let mut codes = 0;
    for script in &scripts {
        let local = connected(&default_cell());
        let (server, _) = serve(&default_cell());
        let remote = connected(&wire_cell(server.local_addr()));
        let a = run_script(&local, script);
        let b = run_script(&remote, script);
        worst = worst.max(compare_runs(&a, &b)?);
        codes += a.iter().filter(|s| s.outcome.is_err()).count();
    }
    ensure(worst <= 1e-9, || format!("joint deviation {worst:.2e}"))?;
    ensure(codes > 0, || "scripts exercised no error paths".into())?;
    Ok(format!(
        "{} scripts, max deviation {worst:.1e}, {codes} matching error codes",
        scripts.len()
    ))
}

fn config_round_trip() -> Verdict {
    for seed in 0..100u64 {
        let d = random_descriptor(seed);
        ensure(d.validate().is_ok(), || {
            format!("seed {seed}: generated descriptor invalid")
        })?;
        let text = d.to_canonical_string();
        let back = parse_descriptor(&text).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(back == d && back.to_canonical_string() == text, || {
            format!("seed {seed}: round trip changed the descriptor")
        })?;
    }
    for (file, path) in FIXTURES {
        let got = error_paths(&fixture(file));
        ensure(got == [path], || {
            format!("{file}: findings at {got:?}, expected [{path}]")
        })?;
    }
    Ok("100 random descriptors round-trip; 12 fixtures rejected at the expected path".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("kinematics-oracle", kinematics_oracle),
        ("ik-round-trip", ik_round_trip),
        ("backend-swap", backend_swap),
        ("demo-binpick", demo_binpick),
        ("gateway-availability", gateway_availability),
        ("local-remote-transparency", transparency),
        ("config-round-trip", config_round_trip),
    ];
    // Keep panic messages out of the report; they become FAIL details.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name} ({secs:.2} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 7 criteria failed");
        std::process::exit(1);
    }
    println!("all 7 criteria passed");
}
