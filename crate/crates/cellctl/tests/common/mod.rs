#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cellctl::config::{load_descriptor, RobotSystemDescriptor};
use cellctl::gateway::{Gateway, Server, ServerHandle};
use cellctl::protocol::{Event, Frame, Request, Response};
use cellctl::registry::ManufacturerRegistry;
use serde_json::Value;

pub fn default_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/default-cell.json")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn default_cell() -> RobotSystemDescriptor {
    load_descriptor(default_path()).unwrap()
}

/// Default cell with the simulator running at `time_scale`.
pub fn cell_at(time_scale: f64) -> RobotSystemDescriptor {
    let mut d = default_cell();
    d.interfaces[0]
        .params
        .insert("time_scale".into(), time_scale.to_string());
    d
}

pub fn serve(d: &RobotSystemDescriptor) -> (ServerHandle, Arc<Gateway>) {
    let gw = Arc::new(Gateway::from_descriptor(d, &ManufacturerRegistry::with_defaults()).unwrap());
    let server = Server::bind(gw.clone(), "127.0.0.1:0").unwrap();
    (server.spawn().unwrap(), gw)
}

pub fn cli() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cellctl"));
    c.env_remove("RUST_LOG");
    c
}

/// Line-oriented test client that keeps events apart from responses.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
    pub events: Vec<Event>,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Client {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
        Client {
            reader: BufReader::new(s.try_clone().unwrap()),
            writer: s,
            next_id: 1,
            events: Vec::new(),
        }
    }

    pub fn send_raw(&mut self, bytes: &[u8]) {
        self.writer.write_all(bytes).unwrap();
        self.writer.flush().unwrap();
    }

    /// Next frame, or `None` if nothing arrives within `timeout`.
    pub fn frame(&mut self, timeout: Duration) -> Option<Frame> {
        self.reader.get_ref().set_read_timeout(Some(timeout)).unwrap();
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => panic!("connection closed by server"),
            Ok(_) => {
                assert!(line.ends_with('\n'));
                Some(
                    Frame::parse(line.trim_end_matches('\n'))
                        .unwrap_or_else(|e| panic!("bad frame {line:?}: {e}")),
                )
            }
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                None
            }
            Err(e) => panic!("read failed: {e}"),
        }
    }

    /// Next response, collecting events seen on the way.
    pub fn response(&mut self) -> Response {
        loop {
            match self.frame(Duration::from_secs(30)).expect("response within 30 s") {
                Frame::Response(r) => return r,
                Frame::Event(e) => self.events.push(e),
            }
        }
    }

    pub fn request(&mut self, op: &str, params: Value) -> Response {
        let id = self.next_id;
        self.next_id += 1;
        self.send_raw(format!("{}\n", Request::new(id, op, params).to_line()).as_bytes());
        let r = self.response();
        assert_eq!(r.id, id as i64, "response id echoes request id");
        r
    }

    pub fn into_stream(self) -> TcpStream {
        self.writer
    }

    /// Collects events for `window`.
    pub fn drain_events(&mut self, window: Duration) -> Vec<Event> {
        let end = Instant::now() + window;
        let mut out = std::mem::take(&mut self.events);
        while let Some(left) = end.checked_duration_since(Instant::now()) {
            match self.frame(left.max(Duration::from_millis(1))) {
                Some(Frame::Event(e)) => out.push(e),
                Some(Frame::Response(r)) => panic!("unexpected response {r:?}"),
                None => break,
            }
        }
        out
    }
}

/// Default cell driving a remote gateway through the wire backend.
pub fn wire_cell(addr: SocketAddr) -> RobotSystemDescriptor {
    let mut d = default_cell();
    let mut params = std::collections::BTreeMap::new();
    params.insert("endpoint".to_string(), addr.to_string());
    d.interfaces.push(cellctl::config::InterfaceBinding {
        interface_type: "wire".into(),
        active: false,
        params,
    });
    assert!(d.activate("wire"));
    d
}

pub fn connected(d: &RobotSystemDescriptor) -> cellctl::Robot {
    use cellctl::core::RobotControl;
    let r = cellctl::registry::create_robot(d, &ManufacturerRegistry::with_defaults()).unwrap();
    r.connect().unwrap();
    r
}

/// What one script step produced: the outcome (or error code) and the
/// joint state read back afterwards.
#[derive(Debug, Clone)]
pub struct Step {
    pub outcome: Result<cellctl::core::Outcome, cellctl::core::ErrorCode>,
    pub joints: cellctl::core::JointVector,
}

pub fn run_script(robot: &dyn cellctl::core::RobotControl, script: &[cellctl::core::Command]) -> Vec<Step> {
    script
        .iter()
        .map(|c| Step {
            outcome: robot.execute(c).map_err(|e| e.code),
            joints: robot.read_joint_state().unwrap(),
        })
        .collect()
}

/// Largest joint or motion-result deviation between two runs, or an
/// error describing the first outcome mismatch.
pub fn compare_runs(a: &[Step], b: &[Step]) -> Result<f64, String> {
    use cellctl::core::Outcome;
    if a.len() != b.len() {
        return Err(format!("{} vs {} steps", a.len(), b.len()));
    }
    let mut worst: f64 = 0.0;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        worst = worst.max(x.joints.max_abs_diff(&y.joints));
        match (&x.outcome, &y.outcome) {
            (Ok(Outcome::Motion(m)), Ok(Outcome::Motion(n))) => {
                worst = worst.max(m.final_joints.max_abs_diff(&n.final_joints));
                worst = worst.max((m.duration - n.duration).abs());
            }
            (Ok(p), Ok(q)) if p == q => {}
            (Err(p), Err(q)) if p == q => {}
            (p, q) => return Err(format!("step {i}: {p:?} vs {q:?}")),
        }
    }
    Ok(worst)
}

/// Mixed script: successes, every validation error, an unreachable
/// linear move and gripper traffic.
pub fn mixed_script() -> Vec<cellctl::core::Command> {
    use cellctl::core::{forward_kinematics, Command, Pose, Vec3};
    let d = default_cell();
    let above = d.named_pose("above-bin").unwrap();
    let mut lowered = forward_kinematics(&d.kinematic_model().unwrap(), &above);
    lowered.position.z -= 0.1;
    let mut outside = above;
    outside[2] = 3.5;
    vec![
        Command::MoveJoints {
            target: above,
            speed_fraction: 1.0,
        },
        Command::MoveJoints {
            target: outside,
            speed_fraction: 1.0,
        },
        Command::MoveLinear {
            target: lowered,
            speed_fraction: 0.5,
        },
        Command::MoveLinear {
            target: Pose::from_position(Vec3::new(5.0, 0.0, 0.0)),
            speed_fraction: 1.0,
        },
        Command::SetGripper { open: false },
        Command::MoveJoints {
            target: above,
            speed_fraction: 0.0,
        },
        Command::SetGripper { open: true },
        Command::Home,
        Command::MoveJoints {
            target: above,
            speed_fraction: 1.5,
        },
        Command::Stop,
    ]
}

fn awkward_f64(rng: &mut impl rand::Rng) -> f64 {
    match rng.gen_range(0..8) {
        0 => 0.0,
        1 => -0.0,
        2 => 5e-324 * rng.gen_range(1.0..1000.0f64),
        3 => rng.gen_range(-1e300..1e300),
        4 => rng.gen_range(-1.0..1.0) * 1e-12,
        _ => rng.gen_range(-3.0..3.0),
    }
}

fn name(rng: &mut impl rand::Rng, len: usize) -> String {
    const CHARS: &[char] = &[
        'a',
        'z',
        'Q',
        '0',
        '9',
        '-',
        '_',
        ' ',
        '"',
        '\\',
        '/',
        'é',
        'ß',
        '→',
        '\u{1F916}',
        '\n',
        '\t',
    ];
    (0..len).map(|_| CHARS[rng.gen_range(0..CHARS.len())]).collect()
}

fn identifier(rng: &mut impl rand::Rng) -> String {
    const HEAD: &[u8] = b"abcxyzABC_";
    const TAIL: &[u8] = b"abcxyzABC_0189";
    let mut s = String::from(HEAD[rng.gen_range(0..HEAD.len())] as char);
    for _ in 0..rng.gen_range(0..12) {
        s.push(TAIL[rng.gen_range(0..TAIL.len())] as char);
    }
    s
}

/// A valid descriptor exercising optional sections, odd strings and
/// extreme but finite numbers.
pub fn random_descriptor(seed: u64) -> RobotSystemDescriptor {
    use cellctl::config::*;
    use cellctl::core::{DhRow, Pose, UnitQuaternion, Vec3};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;

    let dh = (0..6)
        .map(|_| {
            DhRow::new(
                awkward_f64(rng),
                awkward_f64(rng),
                awkward_f64(rng),
                awkward_f64(rng),
            )
        })
        .collect();
    let joint_min: Vec<f64> = (0..6).map(|_| rng.gen_range(-6.0..0.0)).collect();
    let joint_max: Vec<f64> = (0..6).map(|_| rng.gen_range(1e-9..6.0)).collect();
    let within = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..6)
            .map(|i| rng.gen_range(joint_min[i]..=joint_max[i]))
            .collect()
    };
    let home = within(rng);
    let mut named_poses = std::collections::BTreeMap::new();
    if rng.gen_bool(0.8) {
        named_poses.insert("home".to_string(), home.clone());
    }
    for _ in 0..rng.gen_range(0..4) {
        let len = rng.gen_range(1..8);
        let key = name(rng, len);
        named_poses.insert(key, within(rng));
    }
    let kinds = ["simulated", "loopback", "wire", "vendor-ros2"];
    let n_if = rng.gen_range(1..4);
    let active = rng.gen_range(0..n_if);
    let interfaces = (0..n_if)
        .map(|i| InterfaceBinding {
            interface_type: kinds[rng.gen_range(0..kinds.len())].to_string(),
            active: i == active,
            params: (0..rng.gen_range(0..3))
                .map(|_| (name(rng, 4), name(rng, 6)))
                .collect(),
        })
        .collect();
    let scene = rng.gen_bool(0.7).then(|| SceneSection {
        grasp_tolerance: rng.gen_range(1e-6..0.1),
        items: (0..rng.gen_range(0..5))
            .map(|i| ItemSpec {
                id: format!("{}#{i}", name(rng, 3)),
                pose: Pose::new(
                    Vec3::new(awkward_f64(rng), awkward_f64(rng), awkward_f64(rng)),
                    UnitQuaternion::normalize(
                        rng.gen_range(0.1..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ),
                ),
            })
            .collect(),
    });
    RobotSystemDescriptor {
        shell: Shell {
            id: format!("urn:{}", name(rng, 10)),
            id_short: identifier(rng),
        },
        robot: RobotSection {
            manufacturer: format!("m{}", name(rng, 5)),
            model: name(rng, 6),
            dof: 6,
            kinematics: KinematicsSection {
                dh,
                joint_min,
                joint_max,
                max_joint_velocity: (0..6).map(|_| rng.gen_range(1e-3..1e3)).collect(),
            },
            home,
        },
        interfaces,
        named_poses,
        scene,
        motion: MotionSection {
            linear_waypoints: rng.gen_range(1..500),
            ik: IkSection {
                max_iterations: rng.gen_range(1..1000),
                position_tolerance: rng.gen_range(1e-9..1e-2),
                orientation_tolerance: rng.gen_range(1e-9..1e-2),
                damping_lambda: rng.gen_range(1e-4..1.0),
            },
            monitor_period_ms: rng.gen_range(1..5000),
        },
    }
}

/// Invalid fixtures and the path of the single finding each must produce.
pub const FIXTURES: [(&str, &str); 12] = [
    ("two-active-interfaces.json", "interfaces"),
    ("no-active-interface.json", "interfaces"),
    ("dof-five.json", "robot.dof"),
    ("missing-kinematics.json", "robot.kinematics"),
    ("unknown-top-level-field.json", "extra"),
    ("named-pose-outside-limits.json", "named_poses.above-bin"),
    ("inverted-joint-limits.json", "robot.kinematics.joint_min[2]"),
    (
        "zero-joint-velocity.json",
        "robot.kinematics.max_joint_velocity[4]",
    ),
    ("five-dh-rows.json", "robot.kinematics.dh"),
    ("duplicate-item-id.json", "scene.items[3].id"),
    ("zero-linear-waypoints.json", "motion.linear_waypoints"),
    ("negative-damping.json", "motion.ik.damping_lambda"),
];

/// Paths of the error findings for a descriptor file, parse errors included.
pub fn error_paths(path: &std::path::Path) -> Vec<String> {
    match load_descriptor(path) {
        Err(cellctl::config::LoadError::Parse(e)) => vec![e.path],
        Err(e) => panic!("{e}"),
        Ok(d) => d.validate().errors().map(|f| f.path.clone()).collect(),
    }
}

/// Source of the bin-picking application.
pub const APP_SOURCE: &str = include_str!("../../src/apps/binpick.rs");

/// Module paths the application may import from.
const ALLOWED_ROOTS: [&str; 4] = ["std", "cellctl_core", "crate::skills", "serde_json"];
const FORBIDDEN: [&str; 8] = [
    "backends",
    "registry",
    "robot::",
    "Robot",
    "SimulatedArm",
    "LoopbackArm",
    "WireBackend",
    "Backend",
];

pub fn app_dependency_violations(source: &str) -> Vec<String> {
    let mut out = Vec::new();
    let code: Vec<&str> = source
        .lines()
        .filter(|l| !l.trim_start().starts_with("//"))
        .collect();
    for line in &code {
        let t = line.trim_start();
        if let Some(path) = t.strip_prefix("use ") {
            if !ALLOWED_ROOTS.iter().any(|r| path.starts_with(r)) {
                out.push(format!("import outside the allowed layers: {t}"));
            }
        }
        for f in FORBIDDEN {
            // `RobotControl` is the capability contract and is allowed.
            let hits = t
                .match_indices(f)
                .filter(|(i, _)| !t[*i..].starts_with("RobotControl"))
                .count();
            if hits > 0 {
                out.push(format!("reference to `{f}`: {t}"));
            }
        }
    }
    out
}
