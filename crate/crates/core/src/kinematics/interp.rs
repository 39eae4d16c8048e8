use core::fmt;

use super::{JointVector, DOF};
use crate::math::Pose;

/// Interpolation parameter outside `[0, 1]` (or NaN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationError {
    pub s: f64,
}

impl fmt::Display for InterpolationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "interpolation parameter {} is outside [0, 1]", self.s)
    }
}

impl core::error::Error for InterpolationError {}

fn check(s: f64) -> Result<(), InterpolationError> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(InterpolationError { s })
    }
}

/// Componentwise linear blend. Endpoints are returned bitwise.
pub fn interpolate_joint(
    from: &JointVector,
    to: &JointVector,
    s: f64,
) -> Result<JointVector, InterpolationError> {
    check(s)?;
    if s == 0.0 {
        return Ok(*from);
    }
    if s == 1.0 {
        return Ok(*to);
    }
    let mut out = [0.0; DOF];
    for (i, v) in out.iter_mut().enumerate() {
        *v = (1.0 - s) * from[i] + s * to[i];
    }
    Ok(JointVector(out))
}

/// Straight-line position and shorter-arc slerp orientation.
pub fn interpolate_cartesian(from: &Pose, to: &Pose, s: f64) -> Result<Pose, InterpolationError> {
    check(s)?;
    Ok(Pose::new(
        from.position.lerp(to.position, s),
        from.orientation.slerp(to.orientation, s),
    ))
}
