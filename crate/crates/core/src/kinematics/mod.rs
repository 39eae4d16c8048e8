//! Serial-chain kinematics for 6R arms described by classic (distal)
//! Denavit-Hartenberg parameters.
//!
//! Joint `i` contributes `RotZ(q_i + theta_offset_i) * TransZ(d_i) *
//! TransX(a_i) * RotX(alpha_i)`, composed base to flange. All functions are
//! pure and deterministic.

mod ik;
mod interp;

pub use ik::{inverse_kinematics, IkError, IkOptions, IkResult};
pub use interp::{interpolate_cartesian, interpolate_joint, InterpolationError};

use core::fmt;
use core::ops::{Index, IndexMut};

use libm::{cos, sin};
use serde::{Deserialize, Serialize};

use crate::math::{Mat3, Pose, UnitQuaternion, Vec3};

/// Number of joints of every supported arm.
pub const DOF: usize = 6;

/// Joint configuration in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub [f64; DOF]);

impl JointVector {
    pub const ZERO: JointVector = JointVector([0.0; DOF]);

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn as_array(&self) -> &[f64; DOF] {
        &self.0
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<[f64; DOF]> for JointVector {
    fn from(q: [f64; DOF]) -> Self {
        JointVector(q)
    }
}

impl Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for JointVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// One row of a DH table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    pub theta_offset: f64,
    pub d: f64,
    pub a: f64,
    pub alpha: f64,
}

impl DhRow {
    pub const fn new(theta_offset: f64, d: f64, a: f64, alpha: f64) -> Self {
        DhRow {
            theta_offset,
            d,
            a,
            alpha,
        }
    }

    fn is_finite(&self) -> bool {
        self.theta_offset.is_finite() && self.d.is_finite() && self.a.is_finite() && self.alpha.is_finite()
    }

    /// Rotation and translation of this link for joint value `q`.
    fn link_transform(&self, q: f64) -> (Mat3, Vec3) {
        let theta = q + self.theta_offset;
        let (st, ct) = (sin(theta), cos(theta));
        let (sa, ca) = (sin(self.alpha), cos(self.alpha));
        let rot = Mat3([[ct, -st * ca, st * sa], [st, ct * ca, -ct * sa], [0.0, sa, ca]]);
        (rot, Vec3::new(self.a * ct, self.a * st, self.d))
    }
}

/// Why a kinematic model was rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelError {
    NonFiniteRow { joint: usize },
    NonFiniteLimit { joint: usize },
    InvertedLimits { joint: usize, min: f64, max: f64 },
    NonPositiveVelocity { joint: usize, value: f64 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ModelError::NonFiniteRow { joint } => write!(f, "DH row {joint} has a non-finite entry"),
            ModelError::NonFiniteLimit { joint } => write!(f, "joint {joint} has a non-finite limit"),
            ModelError::InvertedLimits { joint, min, max } => {
                write!(f, "joint {joint}: joint_min {min} must be below joint_max {max}")
            }
            ModelError::NonPositiveVelocity { joint, value } => {
                write!(f, "joint {joint}: max_joint_velocity {value} must be positive")
            }
        }
    }
}

impl core::error::Error for ModelError {}

/// DH table plus position and velocity limits of a 6R arm.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicModel {
    rows: [DhRow; DOF],
    joint_min: [f64; DOF],
    joint_max: [f64; DOF],
    max_joint_velocity: [f64; DOF],
}

impl KinematicModel {
    pub fn new(
        rows: [DhRow; DOF],
        joint_min: [f64; DOF],
        joint_max: [f64; DOF],
        max_joint_velocity: [f64; DOF],
    ) -> Result<Self, ModelError> {
        for joint in 0..DOF {
            if !rows[joint].is_finite() {
                return Err(ModelError::NonFiniteRow { joint });
            }
            let (min, max) = (joint_min[joint], joint_max[joint]);
            if !min.is_finite() || !max.is_finite() {
                return Err(ModelError::NonFiniteLimit { joint });
            }
            if min >= max {
                return Err(ModelError::InvertedLimits { joint, min, max });
            }
            let v = max_joint_velocity[joint];
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::NonPositiveVelocity { joint, value: v });
            }
        }
        Ok(KinematicModel {
            rows,
            joint_min,
            joint_max,
            max_joint_velocity,
        })
    }

    pub fn rows(&self) -> &[DhRow; DOF] {
        &self.rows
    }
    pub fn joint_min(&self) -> &[f64; DOF] {
        &self.joint_min
    }
    pub fn joint_max(&self) -> &[f64; DOF] {
        &self.joint_max
    }
    pub fn max_joint_velocity(&self) -> &[f64; DOF] {
        &self.max_joint_velocity
    }

    /// Index of the first joint outside its limits, if any.
    pub fn first_limit_violation(&self, q: &JointVector) -> Option<usize> {
        (0..DOF).find(|&i| !(q[i] >= self.joint_min[i] && q[i] <= self.joint_max[i]))
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        self.first_limit_violation(q).is_none()
    }

    /// Time needed to travel `from -> to` when every joint may move at
    /// `speed_fraction` of its velocity limit.
    pub fn joint_move_duration(&self, from: &JointVector, to: &JointVector, speed_fraction: f64) -> f64 {
        (0..DOF)
            .map(|i| (to[i] - from[i]).abs() / (speed_fraction * self.max_joint_velocity[i]))
            .fold(0.0, f64::max)
    }
}

/// Geometric Jacobian. Rows are linear velocity xyz then angular velocity
/// xyz; columns are joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian(pub [[f64; DOF]; 6]);

impl Jacobian {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[row][col]
    }

    pub fn column(&self, col: usize) -> [f64; 6] {
        let mut c = [0.0; 6];
        for (r, v) in c.iter_mut().enumerate() {
            *v = self.0[r][col];
        }
        c
    }
}

/// Joint axes and origins along the chain. Index 0 is the base frame,
/// index `i` is the frame after joint `i`.
struct ChainFrames {
    origins: [Vec3; DOF + 1],
    axes: [Vec3; DOF + 1],
    flange: Mat3,
}

fn chain_frames(model: &KinematicModel, joints: &JointVector) -> ChainFrames {
    let mut rot = Mat3::IDENTITY;
    let mut pos = Vec3::ZERO;
    let mut origins = [Vec3::ZERO; DOF + 1];
    let mut axes = [Vec3::Z; DOF + 1];
    for (i, row) in model.rows.iter().enumerate() {
        let (r, p) = row.link_transform(joints[i]);
        pos = pos + rot.mul_vec(p);
        rot = rot * r;
        origins[i + 1] = pos;
        axes[i + 1] = rot.column(2);
    }
    ChainFrames {
        origins,
        axes,
        flange: rot,
    }
}

/// Tool-flange pose in the base frame. Joint limits are not enforced.
pub fn forward_kinematics(model: &KinematicModel, joints: &JointVector) -> Pose {
    let f = chain_frames(model, joints);
    Pose::new(f.origins[DOF], UnitQuaternion::from_matrix(&f.flange))
}

/// Geometric Jacobian at `joints`: column `i` is `(z_{i-1} x (p_end - p_{i-1}), z_{i-1})`.
pub fn jacobian(model: &KinematicModel, joints: &JointVector) -> Jacobian {
    let f = chain_frames(model, joints);
    let end = f.origins[DOF];
    let mut j = [[0.0; DOF]; 6];
    for col in 0..DOF {
        let z = f.axes[col];
        let lin = z.cross(end - f.origins[col]);
        let cells = [lin.x, lin.y, lin.z, z.x, z.y, z.z];
        for (row, v) in cells.into_iter().enumerate() {
            j[row][col] = v;
        }
    }
    Jacobian(j)
}

/// Twist-like error taking `current` to `target`: translation difference
/// followed by the axis-angle vector of `target * current^-1` with the
/// angle in `[0, pi]`.
pub fn pose_error(current: &Pose, target: &Pose) -> [f64; 6] {
    let dp = target.position - current.position;
    let rel = target.orientation * current.orientation.conjugate();
    let w = rel.to_rotation_vector();
    [dp.x, dp.y, dp.z, w.x, w.y, w.z]
}

/// Clips each joint into its limits; the flag reports whether anything moved.
pub fn clamp_to_limits(model: &KinematicModel, joints: &JointVector) -> (JointVector, bool) {
    let mut out = *joints;
    let mut clamped = false;
    for i in 0..DOF {
        let v = joints[i].clamp(model.joint_min[i], model.joint_max[i]);
        if v != joints[i] {
            clamped = true;
        }
        out[i] = v;
    }
    (out, clamped)
}
