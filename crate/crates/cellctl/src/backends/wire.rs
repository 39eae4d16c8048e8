//! Network proxy backend: forwards the capability contract to a remote
//! gateway. Remote error codes pass through unchanged; transport failures
//! become `INTERNAL`.

use std::any::Any;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use cellctl_core::{
    Backend, Command, ControlError, GripperState, JointVector, MotionContext, MotionResult, Pose,
};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::protocol::{self, Frame, Request, StatePayload};

/// Poll interval for the abort flag while waiting on a remote motion.
const POLL: Duration = Duration::from_millis(20);

struct Connection {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    next_id: u64,
}

impl Connection {
    fn open(endpoint: &str, timeout: Duration) -> Result<Connection, ControlError> {
        let addrs: Vec<_> = endpoint
            .to_socket_addrs()
            .map_err(|e| transport(endpoint, e))?
            .collect();
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(s) => {
                    s.set_nodelay(true).ok();
                    let reader = BufReader::new(s.try_clone().map_err(|e| transport(endpoint, e))?);
                    return Ok(Connection {
                        writer: s,
                        reader,
                        next_id: 0,
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(match last {
            Some(e) => transport(endpoint, e),
            None => ControlError::internal(format!("{endpoint}: no address to connect to")),
        })
    }

    fn send(&mut self, op: &str, params: Value) -> Result<u64, ControlError> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = Request::new(id, op, params).to_line();
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .map_err(|e| transport("send", e))?;
        Ok(id)
    }

    /// Reads frames until the response to `id`, skipping events. `poll` runs
    /// between read timeouts and may abort the wait by returning an error.
    fn wait_for(
        &mut self,
        id: u64,
        deadline: Option<Instant>,
        mut poll: impl FnMut() -> Result<(), ControlError>,
    ) -> Result<Value, ControlError> {
        self.reader
            .get_ref()
            .set_read_timeout(Some(POLL))
            .map_err(|e| transport("configure", e))?;
        let mut buf = Vec::new();
        loop {
            match self.reader.read_until(b'\n', &mut buf) {
                Ok(0) => return Err(ControlError::internal("gateway closed the connection")),
                Ok(_) if buf.ends_with(b"\n") => {
                    let line = String::from_utf8_lossy(&buf).into_owned();
                    buf.clear();
                    match Frame::parse(line.trim_end()) {
                        Ok(Frame::Event(_)) => continue,
                        Ok(Frame::Response(r)) if r.id == id as i64 => return r.into_result(),
                        Ok(Frame::Response(r)) => {
                            return Err(ControlError::internal(format!(
                                "response id {} does not match request id {id}",
                                r.id
                            )))
                        }
                        Err(e) => return Err(ControlError::internal(format!("unreadable frame: {e}"))),
                    }
                }
                // Partial line at EOF.
                Ok(_) => return Err(ControlError::internal("gateway closed the connection mid-frame")),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    if deadline.is_some_and(|d| Instant::now() >= d) {
                        return Err(ControlError::internal("timed out waiting for the gateway"));
                    }
                    poll()?;
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(transport("receive", e)),
            }
        }
    }
}

fn transport(what: &str, e: std::io::Error) -> ControlError {
    ControlError::internal(format!("transport failure ({what}): {e}"))
}

fn decode<T: DeserializeOwned>(v: Value) -> Result<T, ControlError> {
    serde_json::from_value(v).map_err(|e| ControlError::internal(format!("unexpected result document: {e}")))
}

pub struct WireBackend {
    endpoint: String,
    timeout: Duration,
    conn: Option<Connection>,
}

impl WireBackend {
    /// `endpoint` is `host:port` of a running gateway.
    pub fn new(endpoint: impl Into<String>) -> Self {
        WireBackend {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(10),
            conn: None,
        }
    }

    /// Bound on connecting and on non-motion requests.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn conn(&mut self) -> Result<&mut Connection, ControlError> {
        self.conn.as_mut().ok_or_else(ControlError::not_connected)
    }

    fn call(&mut self, op: &str, params: Value) -> Result<Value, ControlError> {
        let deadline = Instant::now() + self.timeout;
        let conn = self.conn()?;
        let id = conn.send(op, params)?;
        let r = conn.wait_for(id, Some(deadline), || Ok(()));
        self.drop_on_transport_error(r)
    }

    fn drop_on_transport_error<T>(&mut self, r: Result<T, ControlError>) -> Result<T, ControlError> {
        // A desynchronized stream cannot be reused.
        if r.as_ref()
            .is_err_and(|e| e.code == cellctl_core::ErrorCode::Internal)
        {
            self.conn = None;
        }
        r
    }

    fn remote_status(&mut self) -> Result<StatePayload, ControlError> {
        decode(self.call("status", json!({}))?)
    }

    /// Sends `stop` on a separate connection so it is not queued behind
    /// the motion request.
    fn side_stop(endpoint: &str, timeout: Duration) -> Result<(), ControlError> {
        let mut c = Connection::open(endpoint, timeout)?;
        let id = c.send("stop", json!({}))?;
        c.wait_for(id, Some(Instant::now() + timeout), || Ok(()))
            .map(|_| ())
    }
}

impl Backend for WireBackend {
    fn kind(&self) -> &'static str {
        "wire"
    }

    fn connect(&mut self) -> Result<(), ControlError> {
        self.conn = Some(Connection::open(&self.endpoint, self.timeout)?);
        let s = self.remote_status()?;
        if protocol::parse_status(&s.status) == Some(cellctl_core::RobotStatus::Disconnected) {
            self.conn = None;
            return Err(ControlError::internal("remote robot is not connected"));
        }
        Ok(())
    }

    fn disconnect(&mut self) {
        self.conn = None;
    }

    fn joint_state(&mut self) -> Result<JointVector, ControlError> {
        let v = self.call("read_joints", json!({}))?;
        decode(v.get("joints").cloned().unwrap_or(Value::Null))
    }

    fn tcp_pose(&mut self) -> Result<Pose, ControlError> {
        let v = self.call("read_pose", json!({}))?;
        decode(v.get("pose").cloned().unwrap_or(Value::Null))
    }

    fn gripper_state(&mut self) -> Result<GripperState, ControlError> {
        let s = self.remote_status()?;
        Ok(GripperState {
            open: s.gripper_open,
            holding: s.holding,
        })
    }

    fn execute_motion(
        &mut self,
        command: &Command,
        ctx: &mut MotionContext<'_>,
    ) -> Result<MotionResult, ControlError> {
        let (op, params) = match command {
            Command::MoveJoints {
                target,
                speed_fraction,
            } => (
                "move_joints",
                json!({ "target": target, "speed_fraction": speed_fraction }),
            ),
            Command::MoveLinear {
                target,
                speed_fraction,
            } => (
                "move_linear",
                json!({ "target": target, "speed_fraction": speed_fraction }),
            ),
            Command::Home => ("home", json!({})),
            other => {
                return Err(ControlError::internal(format!(
                    "{} is not a motion command",
                    other.name()
                )))
            }
        };
        let endpoint = self.endpoint.clone();
        let timeout = self.timeout;
        let conn = self.conn()?;
        let id = conn.send(op, params)?;
        let mut stop_sent = false;
        let r = conn.wait_for(id, None, || {
            if !stop_sent && ctx.abort_requested() {
                stop_sent = true;
                Self::side_stop(&endpoint, timeout)?;
            }
            Ok(())
        });
        let r = self.drop_on_transport_error(r)?;
        decode(r)
    }

    fn set_gripper(&mut self, open: bool) -> Result<GripperState, ControlError> {
        decode(self.call("gripper", json!({ "open": open }))?)
    }

    fn stop(&mut self) -> Result<(), ControlError> {
        self.call("stop", json!({})).map(|_| ())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cellctl_core::ErrorCode;
    use std::net::TcpListener;

    #[test]
    fn absent_gateway_is_internal() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut w = WireBackend::new(addr.to_string()).with_timeout(Duration::from_secs(1));
        let e = w.connect().unwrap_err();
        assert_eq!(e.code, ErrorCode::Internal);
        assert!(!e.message.is_empty());
    }

    #[test]
    fn unresolvable_endpoint_is_internal() {
        let mut w = WireBackend::new("not an endpoint");
        assert_eq!(w.connect().unwrap_err().code, ErrorCode::Internal);
    }

    #[test]
    fn skips_events_and_passes_codes_through() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut r = BufReader::new(s.try_clone().unwrap());
            let mut w = s;
            let mut line = String::new();
            r.read_line(&mut line).unwrap();
            let req = Request::parse(line.trim_end()).unwrap();
            assert_eq!(req.op, "move_joints");
            let ev = r#"{"event":"state","seq":0,"payload":{"status":"Moving","joints":[0,0,0,0,0,0],"tcp":{"position":[0,0,0],"orientation":[1,0,0,0]},"gripper_open":true,"holding":null}}"#;
            writeln!(w, "{ev}").unwrap();
            let resp = protocol::Response::error(req.id as i64, ErrorCode::LimitViolation, "joint 3");
            writeln!(w, "{}", resp.to_line()).unwrap();
        });
        let mut w = WireBackend::new(addr.to_string());
        w.conn = Some(Connection::open(&addr.to_string(), Duration::from_secs(2)).unwrap());
        let abort = std::sync::atomic::AtomicBool::new(false);
        let mut sink = |_: &JointVector| {};
        let mut ctx = MotionContext::new(&abort, &mut sink);
        let cmd = Command::MoveJoints {
            target: JointVector::ZERO,
            speed_fraction: 1.0,
        };
        let e = w.execute_motion(&cmd, &mut ctx).unwrap_err();
        assert_eq!(e.code, ErrorCode::LimitViolation);
        server.join().unwrap();
    }
}
