//! Wire format of the control gateway: newline-delimited JSON frames.
//!
//! Clients send request envelopes `{"id", "op", "params"}`. The server
//! answers each with a response envelope `{"id", "status", "result" | "error"}`
//! and, on subscribed connections, interleaves event frames
//! `{"event": "state", "seq", "payload"}`.

use cellctl_core::{ControlError, ErrorCode, JointVector, Pose, RobotStatus};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::robot::Telemetry;

/// Every op the gateway dispatches.
pub const OPS: [&str; 13] = [
    "status",
    "read_joints",
    "read_pose",
    "move_joints",
    "move_linear",
    "gripper",
    "stop",
    "home",
    "run_skill",
    "list_skills",
    "subscribe",
    "unsubscribe",
    "describe",
];

/// Id used in responses to frames whose id could not be recovered.
pub const UNKNOWN_ID: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: u64,
    pub op: String,
    pub params: Map<String, Value>,
}

impl Request {
    pub fn new(id: u64, op: &str, params: Value) -> Self {
        let params = match params {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        Request {
            id,
            op: op.to_string(),
            params,
        }
    }

    pub fn to_line(&self) -> String {
        let v = serde_json::json!({ "id": self.id, "op": self.op, "params": self.params });
        v.to_string()
    }

    /// Parses one frame. On failure returns the error response to send.
    pub fn parse(line: &str) -> Result<Request, Response> {
        let value: Value = serde_json::from_str(line).map_err(|e| {
            Response::error(UNKNOWN_ID, ErrorCode::ParseError, format!("malformed frame: {e}"))
        })?;
        let Value::Object(mut obj) = value else {
            return Err(Response::error(
                UNKNOWN_ID,
                ErrorCode::ParseError,
                "frame must be a JSON object",
            ));
        };
        let id = match obj.get("id").and_then(Value::as_u64) {
            Some(id) => id,
            None => {
                return Err(Response::error(
                    UNKNOWN_ID,
                    ErrorCode::ParseError,
                    "frame needs a non-negative integer id",
                ))
            }
        };
        let echo = id as i64;
        if let Some(key) = obj.keys().find(|k| !matches!(k.as_str(), "id" | "op" | "params")) {
            return Err(Response::error(
                echo,
                ErrorCode::ParseError,
                format!("unknown envelope field `{key}`"),
            ));
        }
        let op = match obj.remove("op") {
            Some(Value::String(op)) => op,
            _ => {
                return Err(Response::error(
                    echo,
                    ErrorCode::ParseError,
                    "frame needs a string op",
                ))
            }
        };
        let params = match obj.remove("params") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m,
            Some(_) => {
                return Err(Response::error(
                    echo,
                    ErrorCode::InvalidParams,
                    "params must be an object",
                ))
            }
        };
        Ok(Request { id, op, params })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub id: i64,
    pub status: ResponseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Ok,
    Error,
}

impl Response {
    pub fn ok(id: i64, result: Value) -> Self {
        Response {
            id,
            status: ResponseStatus::Ok,
            result: Some(result),
            error: None,
        }
    }

    pub fn error(id: i64, code: ErrorCode, message: impl Into<String>) -> Self {
        Response {
            id,
            status: ResponseStatus::Error,
            result: None,
            error: Some(ErrorBody {
                code,
                message: message.into(),
            }),
        }
    }

    pub fn from_control(id: i64, e: ControlError) -> Self {
        Response::error(id, e.code, e.message)
    }

    pub fn is_ok(&self) -> bool {
        self.status == ResponseStatus::Ok
    }

    /// The result, or the error as a [`ControlError`].
    pub fn into_result(self) -> Result<Value, ControlError> {
        match (self.status, self.result, self.error) {
            (ResponseStatus::Ok, Some(v), None) => Ok(v),
            (ResponseStatus::Error, None, Some(e)) => Err(ControlError::new(e.code, e.message)),
            _ => Err(ControlError::internal(
                "response carries neither exactly a result nor an error",
            )),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// Monitoring payload: status label plus the robot's observable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePayload {
    /// `Disconnected`, `Idle`, `Moving`, `EStopped` or `Error(CODE)`.
    pub status: String,
    pub joints: JointVector,
    pub tcp: Pose,
    pub gripper_open: bool,
    pub holding: Option<String>,
}

impl From<&Telemetry> for StatePayload {
    fn from(t: &Telemetry) -> Self {
        StatePayload {
            status: t.status.to_string(),
            joints: t.joints,
            tcp: t.tcp,
            gripper_open: t.gripper_open,
            holding: t.holding.clone(),
        }
    }
}

/// Inverse of `RobotStatus`'s `Display`.
pub fn parse_status(s: &str) -> Option<RobotStatus> {
    Some(match s {
        "Disconnected" => RobotStatus::Disconnected,
        "Idle" => RobotStatus::Idle,
        "Moving" => RobotStatus::Moving,
        "EStopped" => RobotStatus::EStopped,
        _ => {
            let code = s.strip_prefix("Error(")?.strip_suffix(')')?;
            RobotStatus::Error(code.parse().ok()?)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub event: String,
    pub seq: u64,
    pub payload: StatePayload,
}

impl Event {
    pub fn state(seq: u64, payload: StatePayload) -> Self {
        Event {
            event: "state".to_string(),
            seq,
            payload,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// A frame as seen by a client.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Response(Response),
    Event(Event),
}

impl Frame {
    /// Frames carrying an `event` field are events; all others responses.
    pub fn parse(line: &str) -> Result<Frame, String> {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if v.get("event").is_some() {
            serde_json::from_value(v)
                .map(Frame::Event)
                .map_err(|e| e.to_string())
        } else {
            serde_json::from_value(v)
                .map(Frame::Response)
                .map_err(|e| e.to_string())
        }
    }
}

/// Typed access to a request's params with strict field checking.
pub struct Params<'a> {
    map: &'a Map<String, Value>,
}

impl<'a> Params<'a> {
    /// Rejects fields outside `allowed`.
    pub fn new(map: &'a Map<String, Value>, allowed: &[&str]) -> Result<Self, ControlError> {
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(ControlError::invalid_params(format!("unknown parameter `{k}`")));
        }
        Ok(Params { map })
    }

    pub fn required(&self, name: &str) -> Result<&'a Value, ControlError> {
        self.map
            .get(name)
            .ok_or_else(|| ControlError::invalid_params(format!("missing required parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Option<&'a Value> {
        self.map.get(name)
    }

    pub fn joints(&self, name: &str) -> Result<JointVector, ControlError> {
        decode_joints(self.required(name)?, name)
    }

    pub fn pose(&self, name: &str) -> Result<Pose, ControlError> {
        decode_pose(self.required(name)?, name)
    }

    pub fn bool(&self, name: &str) -> Result<bool, ControlError> {
        self.required(name)?
            .as_bool()
            .ok_or_else(|| ControlError::invalid_params(format!("`{name}` must be a boolean")))
    }

    pub fn string(&self, name: &str) -> Result<&'a str, ControlError> {
        self.required(name)?
            .as_str()
            .ok_or_else(|| ControlError::invalid_params(format!("`{name}` must be a string")))
    }

    pub fn number_or(&self, name: &str, default: f64) -> Result<f64, ControlError> {
        match self.map.get(name) {
            None => Ok(default),
            Some(v) => decode_number(v, name),
        }
    }
}

pub fn decode_number(v: &Value, path: &str) -> Result<f64, ControlError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ControlError::invalid_params(format!("`{path}` must be a finite number")))
}

pub fn decode_joints(v: &Value, path: &str) -> Result<JointVector, ControlError> {
    let bad = || ControlError::invalid_params(format!("`{path}` must be an array of 6 finite numbers"));
    let arr = v
        .as_array()
        .filter(|a| a.len() == cellctl_core::DOF)
        .ok_or_else(bad)?;
    let mut q = JointVector::ZERO;
    for (i, x) in arr.iter().enumerate() {
        q[i] = x.as_f64().filter(|x| x.is_finite()).ok_or_else(bad)?;
    }
    Ok(q)
}

/// `{"position": [x, y, z], "orientation": [w, x, y, z]}`.
pub fn decode_pose(v: &Value, path: &str) -> Result<Pose, ControlError> {
    Pose::deserialize(v).map_err(|e| ControlError::invalid_params(format!("`{path}`: {e}")))
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("protocol values serialize")
}
