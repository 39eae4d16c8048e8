//! Allocation-light core of the robot cell framework: 6R arm kinematics and
//! the hardware-independent control vocabulary shared by every backend.
//!
//! The crate is `no_std` (it needs `alloc` for error messages and gripper
//! item ids) so the same kinematics can run on a controller without an OS.

#![no_std]

extern crate alloc;

pub mod control;
pub mod kinematics;
pub mod linalg;
pub mod math;

pub use control::{
    Backend, Command, ControlError, ErrorCode, GripperState, MotionContext, MotionResult, Outcome,
    RobotControl, RobotStatus,
};
pub use kinematics::{
    clamp_to_limits, forward_kinematics, interpolate_cartesian, interpolate_joint, inverse_kinematics,
    jacobian, pose_error, DhRow, IkError, IkOptions, IkResult, Jacobian, JointVector, KinematicModel, DOF,
};
pub use math::{Pose, UnitQuaternion, Vec3};
