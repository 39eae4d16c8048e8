//! Hardware-independent control vocabulary.
//!
//! [`RobotControl`] is the capability contract applications and skills are
//! written against. [`Backend`] is what an interface implementation (a
//! simulator, a vendor driver, a network proxy) provides underneath it; the
//! robot handle in the std crate owns the status machine and turns one into
//! the other.

use alloc::string::{String, ToString};
use core::any::Any;
use core::fmt;
use core::str::FromStr;
use core::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::kinematics::JointVector;
use crate::math::Pose;

/// Machine-readable failure classes. The wire spelling is the variant name
/// in upper snake case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    ParseError,
    UnsupportedOp,
    InvalidParams,
    Busy,
    Reachability,
    LimitViolation,
    NotConnected,
    Estopped,
    GraspFailed,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 10] = [
        ErrorCode::ParseError,
        ErrorCode::UnsupportedOp,
        ErrorCode::InvalidParams,
        ErrorCode::Busy,
        ErrorCode::Reachability,
        ErrorCode::LimitViolation,
        ErrorCode::NotConnected,
        ErrorCode::Estopped,
        ErrorCode::GraspFailed,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ParseError => "PARSE_ERROR",
            ErrorCode::UnsupportedOp => "UNSUPPORTED_OP",
            ErrorCode::InvalidParams => "INVALID_PARAMS",
            ErrorCode::Busy => "BUSY",
            ErrorCode::Reachability => "REACHABILITY",
            ErrorCode::LimitViolation => "LIMIT_VIOLATION",
            ErrorCode::NotConnected => "NOT_CONNECTED",
            ErrorCode::Estopped => "ESTOPPED",
            ErrorCode::GraspFailed => "GRASP_FAILED",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownErrorCode;

impl FromStr for ErrorCode {
    type Err = UnknownErrorCode;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or(UnknownErrorCode)
    }
}

/// A coded failure with a human-readable diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlError {
    pub code: ErrorCode,
    pub message: String,
}

impl ControlError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ControlError {
            code,
            message: message.into(),
        }
    }

    pub fn not_connected() -> Self {
        ControlError::new(ErrorCode::NotConnected, "robot is not connected")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ControlError::new(ErrorCode::Internal, message)
    }

    pub fn invalid_params(message: impl Into<String>) -> Self {
        ControlError::new(ErrorCode::InvalidParams, message)
    }
}

impl fmt::Display for ControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl core::error::Error for ControlError {}

/// Observable robot state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RobotStatus {
    Disconnected,
    Idle,
    Moving,
    /// Latched; only an explicit reset returns to `Idle`.
    EStopped,
    Error(ErrorCode),
}

impl RobotStatus {
    /// Status name without the error payload.
    pub fn label(&self) -> &'static str {
        match self {
            RobotStatus::Disconnected => "Disconnected",
            RobotStatus::Idle => "Idle",
            RobotStatus::Moving => "Moving",
            RobotStatus::EStopped => "EStopped",
            RobotStatus::Error(_) => "Error",
        }
    }

    pub fn is_connected(&self) -> bool {
        !matches!(self, RobotStatus::Disconnected)
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        match self {
            RobotStatus::Error(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for RobotStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotStatus::Error(code) => write!(f, "Error({code})"),
            other => f.write_str(other.label()),
        }
    }
}

/// Whether the status machine may move from `from` to `to`. Staying in the
/// same state is always allowed.
///
/// Legal changes: connect (`Disconnected -> Idle`), motion start and end
/// (`Idle <-> Moving`), disconnect from anywhere, emergency stop from any
/// connected state, reset (`EStopped | Error -> Idle`) and a backend fault
/// during motion (`Moving -> Error`).
pub fn is_legal_transition(from: RobotStatus, to: RobotStatus) -> bool {
    use RobotStatus::*;
    if from == to {
        return true;
    }
    match (from, to) {
        (Disconnected, Idle) => true,
        (Idle, Moving) | (Moving, Idle) => true,
        (_, Disconnected) => true,
        (f, EStopped) => f.is_connected(),
        (EStopped, Idle) | (Error(_), Idle) => true,
        (Moving, Error(_)) => true,
        _ => false,
    }
}

/// Abstract command understood by every backend.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    MoveJoints {
        target: JointVector,
        speed_fraction: f64,
    },
    MoveLinear {
        target: Pose,
        speed_fraction: f64,
    },
    SetGripper {
        open: bool,
    },
    Stop,
    Home,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MoveJoints { .. } => "MoveJoints",
            Command::MoveLinear { .. } => "MoveLinear",
            Command::SetGripper { .. } => "SetGripper",
            Command::Stop => "Stop",
            Command::Home => "Home",
        }
    }

    pub fn is_motion(&self) -> bool {
        matches!(
            self,
            Command::MoveJoints { .. } | Command::MoveLinear { .. } | Command::Home
        )
    }

    /// Checks speed range and finiteness of targets.
    pub fn validate(&self) -> Result<(), ControlError> {
        let speed_ok = |s: f64| s > 0.0 && s <= 1.0;
        match self {
            Command::MoveJoints {
                target,
                speed_fraction,
            } => {
                if !speed_ok(*speed_fraction) {
                    return Err(ControlError::invalid_params("speed_fraction must be in (0, 1]"));
                }
                if !target.is_finite() {
                    return Err(ControlError::invalid_params("target joints must be finite"));
                }
            }
            Command::MoveLinear {
                target,
                speed_fraction,
            } => {
                if !speed_ok(*speed_fraction) {
                    return Err(ControlError::invalid_params("speed_fraction must be in (0, 1]"));
                }
                if !target.position.is_finite() {
                    return Err(ControlError::invalid_params("target position must be finite"));
                }
            }
            Command::SetGripper { .. } | Command::Stop | Command::Home => {}
        }
        Ok(())
    }
}

/// Outcome of a completed (or halted) motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionResult {
    pub final_joints: JointVector,
    pub final_pose: Pose,
    /// Nominal motion time in seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperState {
    pub open: bool,
    pub holding: Option<String>,
}

/// Successful result of [`RobotControl::execute`].
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Motion(MotionResult),
    Gripper(GripperState),
    Stopped(RobotStatus),
}

impl Outcome {
    pub fn motion(&self) -> Option<&MotionResult> {
        match self {
            Outcome::Motion(m) => Some(m),
            _ => None,
        }
    }
}

/// The capability contract. Implementations serialize calls internally, so
/// every method takes `&self`.
pub trait RobotControl {
    fn connect(&self) -> Result<RobotStatus, ControlError>;
    fn disconnect(&self) -> RobotStatus;
    fn read_joint_state(&self) -> Result<JointVector, ControlError>;
    fn read_tcp_pose(&self) -> Result<Pose, ControlError>;
    fn read_gripper(&self) -> Result<GripperState, ControlError>;
    fn execute(&self, command: &Command) -> Result<Outcome, ControlError>;
    fn status(&self) -> RobotStatus;
}

macro_rules! forward_robot_control {
    ($($ptr:ty),*) => {$(
        impl<T: RobotControl + ?Sized> RobotControl for $ptr {
            fn connect(&self) -> Result<RobotStatus, ControlError> {
                (**self).connect()
            }
            fn disconnect(&self) -> RobotStatus {
                (**self).disconnect()
            }
            fn read_joint_state(&self) -> Result<JointVector, ControlError> {
                (**self).read_joint_state()
            }
            fn read_tcp_pose(&self) -> Result<Pose, ControlError> {
                (**self).read_tcp_pose()
            }
            fn read_gripper(&self) -> Result<GripperState, ControlError> {
                (**self).read_gripper()
            }
            fn execute(&self, command: &Command) -> Result<Outcome, ControlError> {
                (**self).execute(command)
            }
            fn status(&self) -> RobotStatus {
                (**self).status()
            }
        }
    )*};
}

forward_robot_control!(&T, alloc::boxed::Box<T>, alloc::sync::Arc<T>);

/// Per-motion channel between the robot handle and a backend: an abort flag
/// raised by `Stop`, and a sink for intermediate joint states.
pub struct MotionContext<'a> {
    abort: &'a AtomicBool,
    progress: &'a mut dyn FnMut(&JointVector),
}

impl<'a> MotionContext<'a> {
    pub fn new(abort: &'a AtomicBool, progress: &'a mut dyn FnMut(&JointVector)) -> Self {
        MotionContext { abort, progress }
    }

    pub fn abort_requested(&self) -> bool {
        self.abort.load(Ordering::SeqCst)
    }

    pub fn report(&mut self, joints: &JointVector) {
        (self.progress)(joints)
    }
}

/// An interface implementation underneath the capability contract.
///
/// Status bookkeeping, parameter validation and joint-limit checks happen in
/// the robot handle, so a backend only sees commands that already passed
/// them.
pub trait Backend: Send + Any {
    /// Interface type name, e.g. `"simulated"`.
    fn kind(&self) -> &'static str;
    fn connect(&mut self) -> Result<(), ControlError>;
    fn disconnect(&mut self);
    fn joint_state(&mut self) -> Result<JointVector, ControlError>;
    fn tcp_pose(&mut self) -> Result<Pose, ControlError>;
    fn gripper_state(&mut self) -> Result<GripperState, ControlError>;
    /// Runs `MoveJoints`, `MoveLinear` or `Home`. Other commands never
    /// reach this method.
    fn execute_motion(
        &mut self,
        command: &Command,
        ctx: &mut MotionContext<'_>,
    ) -> Result<MotionResult, ControlError>;
    fn set_gripper(&mut self, open: bool) -> Result<GripperState, ControlError>;
    /// Called for every accepted `Stop`, after any in-flight motion halted.
    fn stop(&mut self) -> Result<(), ControlError> {
        Ok(())
    }
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl From<crate::kinematics::InterpolationError> for ControlError {
    fn from(e: crate::kinematics::InterpolationError) -> Self {
        ControlError::internal(e.to_string())
    }
}
