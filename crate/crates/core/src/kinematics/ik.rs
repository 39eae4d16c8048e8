//! Damped least-squares inverse kinematics.

use core::fmt;

use libm::sqrt;

use super::{clamp_to_limits, forward_kinematics, jacobian, pose_error, JointVector, KinematicModel, DOF};
use crate::linalg::{solve_spd6, Mat6};
use crate::math::Pose;

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub max_iterations: u32,
    /// Meters.
    pub position_tolerance: f64,
    /// Radians.
    pub orientation_tolerance: f64,
    /// Damping factor lambda; the normal equations use lambda squared.
    pub damping_lambda: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            max_iterations: 200,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-4,
            damping_lambda: 0.05,
        }
    }
}

impl IkOptions {
    pub fn validate(&self) -> Result<(), IkError> {
        if self.max_iterations < 1 {
            return Err(IkError::InvalidOptions("max_iterations must be at least 1"));
        }
        if !(self.position_tolerance > 0.0 && self.position_tolerance.is_finite()) {
            return Err(IkError::InvalidOptions("position_tolerance must be positive"));
        }
        if !(self.orientation_tolerance > 0.0 && self.orientation_tolerance.is_finite()) {
            return Err(IkError::InvalidOptions("orientation_tolerance must be positive"));
        }
        if !(self.damping_lambda > 0.0 && self.damping_lambda.is_finite()) {
            return Err(IkError::InvalidOptions("damping_lambda must be positive"));
        }
        Ok(())
    }
}

/// A solved (or best-effort) joint configuration with its residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkResult {
    pub joints: JointVector,
    pub iterations: u32,
    pub position_residual: f64,
    pub orientation_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IkError {
    InvalidOptions(&'static str),
    /// Iteration budget exhausted; `best` holds the lowest-residual iterate.
    NotConverged {
        best: IkResult,
    },
}

impl fmt::Display for IkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IkError::InvalidOptions(why) => write!(f, "invalid IK options: {why}"),
            IkError::NotConverged { best } => write!(
                f,
                "IK did not converge after {} iterations (position residual {:.3e} m, orientation residual {:.3e} rad)",
                best.iterations, best.position_residual, best.orientation_residual
            ),
        }
    }
}

impl core::error::Error for IkError {}

fn residuals(e: &[f64; 6]) -> (f64, f64) {
    let p = sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
    let r = sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5]);
    (p, r)
}

/// Iterates `dq = J^T (J J^T + lambda^2 I)^-1 e`, clamping to the joint
/// limits after every step. The seed is clamped into limits first.
///
/// On success the returned joints satisfy both tolerances, verified by a
/// fresh forward-kinematics evaluation.
pub fn inverse_kinematics(
    model: &KinematicModel,
    target: &Pose,
    seed: &JointVector,
    opts: &IkOptions,
) -> Result<IkResult, IkError> {
    opts.validate()?;
    let lambda_sq = opts.damping_lambda * opts.damping_lambda;
    let (mut q, _) = clamp_to_limits(model, seed);
    let mut best: Option<IkResult> = None;

    for iteration in 0..=opts.max_iterations {
        let e = pose_error(&forward_kinematics(model, &q), target);
        let (pos_res, rot_res) = residuals(&e);
        let current = IkResult {
            joints: q,
            iterations: iteration,
            position_residual: pos_res,
            orientation_residual: rot_res,
        };
        if pos_res <= opts.position_tolerance && rot_res <= opts.orientation_tolerance {
            return Ok(current);
        }
        if best.is_none_or(|b| pos_res + rot_res < b.position_residual + b.orientation_residual) {
            best = Some(current);
        }
        if iteration == opts.max_iterations || !(pos_res.is_finite() && rot_res.is_finite()) {
            break;
        }

        let j = jacobian(model, &q).0;
        let mut jjt: Mat6 = [[0.0; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                jjt[r][c] = (0..DOF).map(|k| j[r][k] * j[c][k]).sum();
            }
            jjt[r][r] += lambda_sq;
        }
        let Some(y) = solve_spd6(&jjt, &e) else { break };
        let mut next = q;
        for k in 0..DOF {
            next[k] += (0..6).map(|r| j[r][k] * y[r]).sum::<f64>();
        }
        q = clamp_to_limits(model, &next).0;
    }

    let mut best = best.expect("at least one iterate is evaluated");
    best.iterations = opts.max_iterations;
    Err(IkError::NotConverged { best })
}
