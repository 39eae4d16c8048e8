use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use cellctl::apps::binpick::{self, BinPickJob};
use cellctl::backends::SimulatedArm;
use cellctl::config::{load_descriptor, LoadError, RobotSystemDescriptor};
use cellctl::core::{
    forward_kinematics, inverse_kinematics, IkError, IkResult, JointVector, Pose, RobotControl,
};
use cellctl::demo::{item_id, BinRegion, SceneGenerator};
use cellctl::gateway::{Gateway, Server};
use cellctl::registry::{create_robot, ManufacturerRegistry};
use cellctl::skills::{CancelToken, SkillEnv, SkillEvent, SkillRegistry, SkillState};
use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

/// Robot cell controller.
#[derive(Parser)]
#[command(name = "cellctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a descriptor and print one finding per line.
    Validate { path: PathBuf },
    /// Serve the control gateway for a descriptor.
    Serve {
        path: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7070")]
        listen: String,
    },
    /// Run one skill against the descriptor's active interface.
    #[command(alias = "run_skill")]
    RunSkill {
        path: PathBuf,
        name: String,
        /// Skill parameters as a JSON object.
        #[arg(long, default_value = "{}")]
        params: String,
    },
    /// Demo applications.
    Demo {
        #[command(subcommand)]
        app: DemoCmd,
    },
    /// Forward kinematics: print the TCP pose for a joint vector.
    Fk {
        path: PathBuf,
        /// Six joint values, comma separated or as a JSON array.
        #[arg(long, allow_hyphen_values = true)]
        joints: String,
    },
    /// Inverse kinematics: print joints reaching a pose.
    Ik {
        path: PathBuf,
        /// `x,y,z,qw,qx,qy,qz` or a JSON pose document.
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        /// Initial guess; defaults to the home pose.
        #[arg(long, allow_hyphen_values = true)]
        seed_joints: Option<String>,
    },
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Empty a simulated bin of seeded random items.
    Binpick {
        path: PathBuf,
        #[arg(long, default_value_t = 10)]
        items: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failed command: message for stderr and the exit code.
struct Failure {
    code: u8,
    error: Option<anyhow::Error>,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure {
        code: 1,
        error: Some(error),
    }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure {
        code: 2,
        error: Some(error),
    }
}

/// Failure whose explanation is already on stdout.
const REPORTED: Failure = Failure { code: 1, error: None };

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let r = match cli.command {
        Cmd::Validate { path } => validate(&path),
        Cmd::Serve { path, listen } => serve(&path, &listen),
        Cmd::RunSkill { path, name, params } => run_skill(&path, &name, &params),
        Cmd::Demo {
            app: DemoCmd::Binpick { path, items, seed },
        } => demo_binpick(&path, items, seed),
        Cmd::Fk { path, joints } => fk(&path, &joints),
        Cmd::Ik {
            path,
            pose,
            seed_joints,
        } => ik(&path, &pose, seed_joints.as_deref()),
    };
    let _ = std::io::stdout().flush();
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(e) = f.error {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<RobotSystemDescriptor, Failure> {
    load_descriptor(path).map_err(|e| match e {
        LoadError::Io { .. } => usage(e.into()),
        LoadError::Parse(_) => usage(anyhow!("{}: {e}", path.display())),
    })
}

/// Loads and validates, printing the report to stderr when it has errors.
fn load_valid(path: &Path) -> Result<RobotSystemDescriptor, Failure> {
    let d = load(path)?;
    let report = d.validate();
    if !report.is_ok() {
        eprint!("{report}");
        return Err(usage(anyhow!("{}: descriptor is invalid", path.display())));
    }
    Ok(d)
}

fn validate(path: &Path) -> Outcome {
    let d = match load_descriptor(path) {
        Ok(d) => d,
        Err(LoadError::Parse(e)) => {
            println!("ERROR {} {}", e.path, e.message);
            return Err(REPORTED);
        }
        Err(e) => return Err(usage(e.into())),
    };
    let report = d.validate();
    print!("{report}");
    if report.is_ok() {
        Ok(())
    } else {
        Err(REPORTED)
    }
}

fn serve(path: &Path, listen: &str) -> Outcome {
    let d = load_valid(path)?;
    let gateway = Gateway::from_descriptor(&d, &ManufacturerRegistry::with_defaults())
        .map_err(|e| runtime(e.into()))?;
    let server = Server::bind(Arc::new(gateway), listen)
        .with_context(|| format!("cannot listen on {listen}"))
        .map_err(runtime)?;
    let addr = server.local_addr().map_err(|e| runtime(e.into()))?;
    println!("LISTENING {addr}");
    let _ = std::io::stdout().flush();
    log::info!("serving {} on {addr}", d.shell.id);
    server.run().map_err(|e| runtime(e.into()))
}

fn connected_robot(d: &RobotSystemDescriptor) -> Result<cellctl::Robot, Failure> {
    let robot = create_robot(d, &ManufacturerRegistry::with_defaults()).map_err(|e| usage(e.into()))?;
    robot.connect().context("cannot connect robot").map_err(runtime)?;
    Ok(robot)
}

fn run_skill(path: &Path, name: &str, params: &str) -> Outcome {
    let d = load_valid(path)?;
    let params: Map<String, Value> = match serde_json::from_str(params) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(usage(anyhow!("--params must be a JSON object"))),
        Err(e) => return Err(usage(anyhow!("--params is not valid JSON: {e}"))),
    };
    let skills = SkillRegistry::with_builtins();
    let mut instance = skills.instantiate(name, &params).map_err(|e| usage(e.into()))?;
    let robot = connected_robot(&d)?;
    let result = instance.execute(
        &robot,
        &SkillEnv::from_descriptor(&d),
        &CancelToken::new(),
        &mut |_| {},
    );
    println!("{}", result.to_json());
    if result.succeeded() {
        Ok(())
    } else {
        Err(runtime(anyhow!("{}", result.detail)))
    }
}

fn demo_binpick(path: &Path, items: usize, seed: u64) -> Outcome {
    let d = load_valid(path)?;
    match d.active_interface() {
        Some(b) if b.interface_type == "simulated" => {}
        _ => return Err(usage(anyhow!("the demo needs the simulated interface active"))),
    }
    let above_bin = d
        .named_pose("above-bin")
        .ok_or_else(|| usage(anyhow!("descriptor has no `above-bin` named pose")))?;
    let model = d.kinematic_model().map_err(|e| usage(anyhow!(e)))?;
    let generator = SceneGenerator {
        model: &model,
        home: d.home().expect("validated"),
        above_bin,
        region: BinRegion::default(),
        linear_waypoints: d.motion.linear_waypoints as usize,
        ik: d.ik_options(),
    };
    let poses = generator.generate(items, seed).map_err(|e| runtime(e.into()))?;

    let robot = connected_robot(&d)?;
    robot
        .with_backend(|arm: &mut SimulatedArm| {
            arm.clear_scene();
            poses
                .iter()
                .enumerate()
                .try_for_each(|(i, p)| arm.spawn_item(&item_id(i), *p))
        })
        .expect("simulated backend")
        .map_err(|e| runtime(e.into()))?;

    let job = BinPickJob::from_item_poses(poses);
    let mut out = std::io::stdout().lock();
    let result = binpick::run(
        &robot,
        &SkillRegistry::with_builtins(),
        &SkillEnv::from_descriptor(&d),
        &job,
        &CancelToken::new(),
        &mut |e| {
            let _ = match e {
                SkillEvent::Picked(id) => writeln!(out, "PICKED {id}"),
                SkillEvent::Placed(id) => writeln!(out, "PLACED {id}"),
            };
        },
    );
    let snapshot = robot
        .with_backend(|arm: &mut SimulatedArm| arm.snapshot())
        .expect("simulated backend");
    let completed = result
        .outputs
        .get("completed")
        .and_then(Value::as_u64)
        .unwrap_or(0);
    println!("COMPLETED {completed}");
    println!("{}", snapshot.to_json());
    match result.state {
        SkillState::Succeeded => Ok(()),
        SkillState::Failed(cellctl::core::ErrorCode::InvalidParams) => {
            Err(usage(anyhow!("{}", result.detail)))
        }
        _ => Err(runtime(anyhow!("{}: {}", result.state, result.detail))),
    }
}

fn parse_numbers(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    let s = s.trim();
    let v: Result<Vec<f64>, String> = if s.starts_with('[') {
        serde_json::from_str(s).map_err(|e| e.to_string())
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
            .collect()
    };
    let v = v.map_err(|e| usage(anyhow!("invalid {what}: {e}")))?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(usage(anyhow!("invalid {what}: values must be finite")));
    }
    Ok(v)
}

fn parse_joints(s: &str) -> Result<JointVector, Failure> {
    let v = parse_numbers(s, "joints")?;
    let arr: [f64; 6] = v
        .try_into()
        .map_err(|v: Vec<f64>| usage(anyhow!("expected 6 joint values, got {}", v.len())))?;
    Ok(JointVector(arr))
}

fn parse_pose(s: &str) -> Result<Pose, Failure> {
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).map_err(|e| usage(anyhow!("invalid pose: {e}")));
    }
    let v = parse_numbers(s, "pose")?;
    if v.len() != 7 {
        return Err(usage(anyhow!(
            "expected 7 pose values (x,y,z,qw,qx,qy,qz), got {}",
            v.len()
        )));
    }
    serde_json::from_value(json!({ "position": &v[..3], "orientation": &v[3..] }))
        .map_err(|e| usage(anyhow!("invalid pose: {e}")))
}

fn fk(path: &Path, joints: &str) -> Outcome {
    let d = load_valid(path)?;
    let model = d.kinematic_model().map_err(|e| usage(anyhow!(e)))?;
    let q = parse_joints(joints)?;
    println!(
        "{}",
        serde_json::to_string(&forward_kinematics(&model, &q)).expect("pose serializes")
    );
    Ok(())
}

fn ik_document(r: &IkResult, converged: bool) -> Value {
    json!({
        "converged": converged,
        "joints": r.joints,
        "iterations": r.iterations,
        "position_residual": r.position_residual,
        "orientation_residual": r.orientation_residual,
    })
}

fn ik(path: &Path, pose: &str, seed: Option<&str>) -> Outcome {
    let d = load_valid(path)?;
    let model = d.kinematic_model().map_err(|e| usage(anyhow!(e)))?;
    let target = parse_pose(pose)?;
    let seed = match seed {
        Some(s) => parse_joints(s)?,
        None => d.home().expect("validated"),
    };
    match inverse_kinematics(&model, &target, &seed, &d.ik_options()) {
        Ok(r) => {
            println!("{}", ik_document(&r, true));
            Ok(())
        }
        Err(IkError::NotConverged { best }) => {
            println!("{}", ik_document(&best, false));
            Err(runtime(anyhow!("IK did not converge")))
        }
        Err(e) => Err(usage(anyhow!(e))),
    }
}
