//! The external control gateway.
//!
//! [`Gateway`] dispatches request envelopes against one shared [`Robot`];
//! it needs no sockets and is unit-tested directly. [`Server`] puts it on a
//! TCP listener with one thread per connection.
//!
//! Motion-affecting ops (`move_joints`, `move_linear`, `home`, `gripper`,
//! `run_skill`) pass through a single gate: while one is in flight on any
//! connection, the others answer `BUSY`. Everything else is admitted
//! concurrently.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, TryLockError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use cellctl_core::{Command, ControlError, ErrorCode, Outcome, RobotControl, RobotStatus};
use serde_json::{json, Value};

use crate::config::RobotSystemDescriptor;
use crate::protocol::{Event, Params, Request, Response, StatePayload};
use crate::registry::{create_robot, ManufacturerRegistry, SetupError};
use crate::robot::Robot;
use crate::skills::{CancelToken, SkillEnv, SkillEvent, SkillRegistry};

/// Longest accepted frame in bytes, newline excluded.
pub const MAX_FRAME_LEN: usize = 1 << 20;

const MONITOR_POLL: Duration = Duration::from_millis(20);

/// Receives serialized event lines (without the trailing newline).
pub type EventSink = Arc<dyn Fn(&str) + Send + Sync>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub struct Gateway {
    robot: Arc<Robot>,
    canonical: String,
    skills: SkillRegistry,
    env: SkillEnv,
    monitor_period: Duration,
    motion_gate: Mutex<()>,
    active_skill: Mutex<Option<CancelToken>>,
}

impl Gateway {
    pub fn new(descriptor: &RobotSystemDescriptor, robot: Arc<Robot>, skills: SkillRegistry) -> Self {
        Gateway {
            robot,
            canonical: descriptor.to_canonical_string(),
            skills,
            env: SkillEnv::from_descriptor(descriptor),
            monitor_period: Duration::from_millis(descriptor.motion.monitor_period_ms.max(1)),
            motion_gate: Mutex::new(()),
            active_skill: Mutex::new(None),
        }
    }

    /// Builds the robot for `descriptor`, connects it, and registers the
    /// built-in skills.
    pub fn from_descriptor(
        descriptor: &RobotSystemDescriptor,
        registry: &ManufacturerRegistry,
    ) -> Result<Gateway, SetupError> {
        let robot = Arc::new(create_robot(descriptor, registry)?);
        robot.connect().map_err(|e| SetupError::Backend {
            interface_type: robot.interface_type().to_string(),
            message: e.to_string(),
        })?;
        Ok(Gateway::new(descriptor, robot, SkillRegistry::with_builtins()))
    }

    pub fn robot(&self) -> &Arc<Robot> {
        &self.robot
    }

    pub fn monitor_period(&self) -> Duration {
        self.monitor_period
    }

    /// Parses and dispatches one frame.
    pub fn handle_line(&self, session: &mut Session, line: &str) -> Response {
        match Request::parse(line) {
            Ok(req) => self.handle_request(session, &req),
            Err(resp) => resp,
        }
    }

    pub fn handle_request(&self, session: &mut Session, req: &Request) -> Response {
        let id = req.id as i64;
        log::debug!("request {} {}", req.id, req.op);
        let r = match req.op.as_str() {
            "status" => self.no_params(req).map(|()| self.status()),
            "read_joints" => self
                .no_params(req)
                .and_then(|()| self.robot.read_joint_state())
                .map(|j| json!({ "joints": j })),
            "read_pose" => self
                .no_params(req)
                .and_then(|()| self.robot.read_tcp_pose())
                .map(|p| json!({ "pose": p })),
            "move_joints" => self.gated(|| {
                let p = Params::new(&req.params, &["target", "speed_fraction"])?;
                let cmd = Command::MoveJoints {
                    target: p.joints("target")?,
                    speed_fraction: p.number_or("speed_fraction", 1.0)?,
                };
                self.execute(&cmd)
            }),
            "move_linear" => self.gated(|| {
                let p = Params::new(&req.params, &["target", "speed_fraction"])?;
                let cmd = Command::MoveLinear {
                    target: p.pose("target")?,
                    speed_fraction: p.number_or("speed_fraction", 1.0)?,
                };
                self.execute(&cmd)
            }),
            "home" => self.gated(|| {
                self.no_params(req)?;
                self.execute(&Command::Home)
            }),
            "gripper" => self.gated(|| {
                let p = Params::new(&req.params, &["open"])?;
                self.execute(&Command::SetGripper {
                    open: p.bool("open")?,
                })
            }),
            "stop" => self.no_params(req).and_then(|()| self.stop()),
            "run_skill" => self.gated(|| self.run_skill(req)),
            "list_skills" => self.no_params(req).map(|()| self.skills.list_json()),
            "subscribe" => self.no_params(req).and_then(|()| self.subscribe(session)),
            "unsubscribe" => self.no_params(req).map(|()| {
                session.unsubscribe();
                json!({ "subscribed": false })
            }),
            "describe" => self
                .no_params(req)
                .map(|()| json!({ "descriptor": self.canonical })),
            other => Err(ControlError::new(
                ErrorCode::UnsupportedOp,
                format!("unsupported op `{other}`"),
            )),
        };
        match r {
            Ok(v) => Response::ok(id, v),
            Err(e) => Response::from_control(id, e),
        }
    }

    fn no_params(&self, req: &Request) -> Result<(), ControlError> {
        Params::new(&req.params, &[]).map(|_| ())
    }

    fn status(&self) -> Value {
        serde_json::to_value(StatePayload::from(&self.robot.telemetry())).expect("payload serializes")
    }

    fn gated(&self, f: impl FnOnce() -> Result<Value, ControlError>) -> Result<Value, ControlError> {
        let _guard = match self.motion_gate.try_lock() {
            Ok(g) => g,
            Err(TryLockError::Poisoned(e)) => e.into_inner(),
            Err(TryLockError::WouldBlock) => {
                return Err(ControlError::new(
                    ErrorCode::Busy,
                    "another motion request is in progress",
                ))
            }
        };
        f()
    }

    fn execute(&self, cmd: &Command) -> Result<Value, ControlError> {
        Ok(match self.robot.execute(cmd)? {
            Outcome::Motion(m) => serde_json::to_value(m).expect("motion result serializes"),
            Outcome::Gripper(g) => serde_json::to_value(g).expect("gripper state serializes"),
            Outcome::Stopped(s) => json!({ "status": s.to_string() }),
        })
    }

    fn stop(&self) -> Result<Value, ControlError> {
        if let Some(token) = lock(&self.active_skill).as_ref() {
            token.cancel();
        }
        self.execute(&Command::Stop)
    }

    fn run_skill(&self, req: &Request) -> Result<Value, ControlError> {
        let p = Params::new(&req.params, &["name", "params"])?;
        let name = p.string("name")?;
        let empty = serde_json::Map::new();
        let params = match p.get("params") {
            None | Some(Value::Null) => &empty,
            Some(Value::Object(m)) => m,
            Some(_) => return Err(ControlError::invalid_params("`params` must be an object")),
        };
        let mut instance = self.skills.instantiate(name, params)?;
        let token = CancelToken::new();
        *lock(&self.active_skill) = Some(token.clone());
        let result = instance.execute(&*self.robot, &self.env, &token, &mut |e| match e {
            SkillEvent::Picked(id) => log::info!("picked {id}"),
            SkillEvent::Placed(id) => log::info!("placed {id}"),
        });
        *lock(&self.active_skill) = None;
        Ok(result.to_json())
    }

    fn subscribe(&self, session: &mut Session) -> Result<Value, ControlError> {
        if session.monitor.is_some() {
            return Err(ControlError::invalid_params("connection is already subscribed"));
        }
        let sub = self.robot.subscribe();
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let sub = sub.clone();
            let robot = self.robot.clone();
            let sink = session.sink.clone();
            let next_seq = session.next_seq.clone();
            let base = next_seq.load(Ordering::SeqCst);
            let period = self.monitor_period;
            let stop = stop.clone();
            thread::Builder::new()
                .name("cellctl-monitor".into())
                .spawn(move || {
                    let mut last = Instant::now();
                    while let Some(events) = sub.wait(MONITOR_POLL.min(period)) {
                        for e in events {
                            let seq = base + e.seq;
                            sink(&Event::state(seq, StatePayload::from(&e.telemetry)).to_line());
                            next_seq.store(seq + 1, Ordering::SeqCst);
                            last = Instant::now();
                        }
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let t = robot.telemetry();
                        if t.status == RobotStatus::Moving && last.elapsed() >= period {
                            sub.inject(t);
                            last = Instant::now();
                        }
                    }
                })
                .map_err(|e| ControlError::internal(format!("cannot start monitor: {e}")))?
        };
        session.monitor = Some(Monitor { sub, stop, thread });
        Ok(json!({ "subscribed": true }))
    }
}

struct Monitor {
    sub: crate::robot::Subscription,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

/// Per-connection state: where events go and the active subscription.
pub struct Session {
    sink: EventSink,
    monitor: Option<Monitor>,
    next_seq: Arc<AtomicU64>,
}

impl Session {
    pub fn new(sink: EventSink) -> Self {
        Session {
            sink,
            monitor: None,
            next_seq: Arc::new(AtomicU64::new(0)),
        }
    }

    /// A session whose events are discarded.
    pub fn detached() -> Self {
        Session::new(Arc::new(|_: &str| {}))
    }

    pub fn is_subscribed(&self) -> bool {
        self.monitor.is_some()
    }

    /// Stops event delivery after flushing events already queued. No event
    /// is emitted after this returns.
    pub fn unsubscribe(&mut self) {
        if let Some(m) = self.monitor.take() {
            m.stop.store(true, Ordering::SeqCst);
            let _ = m.thread.join();
            m.sub.close();
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.unsubscribe();
    }
}

/// Reads one LF-terminated frame. `Ok(None)` at end of stream; an
/// oversized frame is consumed up to its newline and reported as `Err`.
fn read_frame(reader: &mut impl BufRead, buf: &mut Vec<u8>) -> io::Result<Option<Result<String, String>>> {
    buf.clear();
    let n = reader
        .by_ref()
        .take(MAX_FRAME_LEN as u64 + 1)
        .read_until(b'\n', buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') && buf.len() > MAX_FRAME_LEN {
        let mut sink = Vec::new();
        reader.read_until(b'\n', &mut sink)?;
        return Ok(Some(Err(format!("frame exceeds {MAX_FRAME_LEN} bytes"))));
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
    }
    Ok(Some(
        String::from_utf8(std::mem::take(buf)).map_err(|_| "frame is not valid UTF-8".to_string()),
    ))
}

/// Serves one connection until the peer closes it.
pub fn serve_connection(gateway: &Gateway, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    let sink_writer = writer.clone();
    let write_line = move |w: &Mutex<TcpStream>, line: &str| {
        let mut frame = String::with_capacity(line.len() + 1);
        frame.push_str(line);
        frame.push('\n');
        let mut w = lock(w);
        let _ = w.write_all(frame.as_bytes()).and_then(|()| w.flush());
    };
    let mut session = Session::new(Arc::new(move |line: &str| write_line(&sink_writer, line)));
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    while let Some(frame) = read_frame(&mut reader, &mut buf)? {
        let resp = match frame {
            Ok(line) => gateway.handle_line(&mut session, &line),
            Err(why) => Response::error(crate::protocol::UNKNOWN_ID, ErrorCode::ParseError, why),
        };
        write_line(&writer, &resp.to_line());
    }
    Ok(())
}

/// A bound gateway listener.
pub struct Server {
    listener: TcpListener,
    gateway: Arc<Gateway>,
}

impl Server {
    pub fn bind(gateway: Arc<Gateway>, addr: impl ToSocketAddrs) -> io::Result<Server> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            gateway,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections on a background thread.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let connections: Arc<Mutex<Vec<(TcpStream, JoinHandle<()>)>>> = Arc::default();
        let accept = {
            let shutdown = shutdown.clone();
            let connections = connections.clone();
            thread::Builder::new()
                .name("cellctl-accept".into())
                .spawn(move || {
                    for stream in self.listener.incoming() {
                        if shutdown.load(Ordering::SeqCst) {
                            break;
                        }
                        let stream = match stream {
                            Ok(s) => s,
                            Err(e) => {
                                log::warn!("accept failed: {e}");
                                continue;
                            }
                        };
                        let Ok(control) = stream.try_clone() else { continue };
                        let gateway = self.gateway.clone();
                        let peer = stream.peer_addr().ok();
                        log::info!("client connected: {peer:?}");
                        let spawned = thread::Builder::new().name("cellctl-conn".into()).spawn(move || {
                            if let Err(e) = serve_connection(&gateway, stream) {
                                log::debug!("connection {peer:?} ended: {e}");
                            }
                            log::info!("client disconnected: {peer:?}");
                        });
                        match spawned {
                            Ok(handle) => {
                                let mut conns = lock(&connections);
                                conns.retain(|(_, h)| !h.is_finished());
                                conns.push((control, handle));
                            }
                            Err(e) => log::warn!("cannot start connection thread: {e}"),
                        }
                    }
                })?
        };
        Ok(ServerHandle {
            addr,
            shutdown,
            accept: Some(accept),
            connections,
        })
    }

    /// Serves on the calling thread forever.
    pub fn run(self) -> io::Result<()> {
        let handle = self.spawn()?;
        handle.join();
        Ok(())
    }
}

/// Running server. Dropping it shuts the server down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    connections: Arc<Mutex<Vec<(TcpStream, JoinHandle<()>)>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Closes the listener and every open connection, then waits for the
    /// threads to finish.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        let Some(accept) = self.accept.take() else { return };
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        let _ = accept.join();
        let conns = std::mem::take(&mut *lock(&self.connections));
        for (stream, _) in &conns {
            let _ = stream.shutdown(Shutdown::Both);
        }
        for (_, handle) in conns {
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}
