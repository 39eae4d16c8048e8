//! Small fixed-size geometry types used by the kinematics code.
//!
//! Everything here is `Copy` and allocation free. Rotations are carried as
//! unit quaternions `(w, x, y, z)` on the public surface and as row-major
//! 3x3 matrices internally.

use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use libm::{acos, atan2, cos, sin, sqrt};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Accepted deviation of `|q|` from 1 before a quaternion is renormalized.
const NORM_EXACT: f64 = 1e-12;
/// Largest deviation of `|q|` from 1 that is still accepted as "unit".
const NORM_ACCEPT: f64 = 1e-6;

/// A point or free vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        sqrt(self.dot(self))
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Linear blend; `s = 0` and `s = 1` return the endpoints bitwise.
    pub fn lerp(self, o: Vec3, s: f64) -> Vec3 {
        if s == 0.0 {
            self
        } else if s == 1.0 {
            o
        } else {
            self.scale(1.0 - s) + o.scale(s)
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec3::from_array(<[f64; 3]>::deserialize(d)?);
        if !v.is_finite() {
            return Err(D::Error::custom("position components must be finite"));
        }
        Ok(v)
    }
}

/// Row-major 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn rot_x(angle: f64) -> Mat3 {
        let (s, c) = (sin(angle), cos(angle));
        Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn rot_z(angle: f64) -> Mat3 {
        let (s, c) = (sin(angle), cos(angle));
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }
}

/// Quaternion `w + xi + yj + zk` with norm 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

/// Rejected quaternion input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuaternionError {
    NonFinite,
    NotUnit { norm: f64 },
}

impl fmt::Display for QuaternionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuaternionError::NonFinite => f.write_str("quaternion components must be finite"),
            QuaternionError::NotUnit { norm } => {
                write!(f, "quaternion norm {norm} is not within {NORM_ACCEPT} of 1")
            }
        }
    }
}

impl core::error::Error for QuaternionError {}

impl Default for UnitQuaternion {
    fn default() -> Self {
        UnitQuaternion::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Accepts a quaternion whose norm is within 1e-6 of one, renormalizing
    /// it when the deviation exceeds 1e-12.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, QuaternionError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(QuaternionError::NonFinite);
        }
        let n = sqrt(w * w + x * x + y * y + z * z);
        if (n - 1.0).abs() > NORM_ACCEPT {
            return Err(QuaternionError::NotUnit { norm: n });
        }
        let q = UnitQuaternion { w, x, y, z };
        Ok(if (n - 1.0).abs() > NORM_EXACT {
            q.scaled(1.0 / n)
        } else {
            q
        })
    }

    /// Normalizes an arbitrary non-zero quaternion.
    pub fn normalize(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = sqrt(w * w + x * x + y * y + z * z);
        UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return UnitQuaternion::IDENTITY;
        }
        let (s, c) = (sin(angle / 2.0), cos(angle / 2.0));
        let a = axis.scale(s / n);
        UnitQuaternion::normalize(c, a.x, a.y, a.z)
    }

    /// Rotation vector (axis scaled by angle). Small rotations stay exact to
    /// first order.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            UnitQuaternion::IDENTITY
        } else {
            UnitQuaternion::from_axis_angle(v, angle)
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn conjugate(self) -> Self {
        UnitQuaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn dot(self, o: UnitQuaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    fn scaled(self, s: f64) -> Self {
        UnitQuaternion {
            w: self.w * s,
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }

    fn negated(self) -> Self {
        self.scaled(-1.0)
    }

    /// Shepperd's method; the result has `w >= 0`.
    pub fn from_matrix(m: &Mat3) -> Self {
        let r = &m.0;
        let trace = r[0][0] + r[1][1] + r[2][2];
        let q = if trace > 0.0 {
            let s = sqrt(trace + 1.0) * 2.0;
            UnitQuaternion {
                w: 0.25 * s,
                x: (r[2][1] - r[1][2]) / s,
                y: (r[0][2] - r[2][0]) / s,
                z: (r[1][0] - r[0][1]) / s,
            }
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]) * 2.0;
            UnitQuaternion {
                w: (r[2][1] - r[1][2]) / s,
                x: 0.25 * s,
                y: (r[0][1] + r[1][0]) / s,
                z: (r[0][2] + r[2][0]) / s,
            }
        } else if r[1][1] > r[2][2] {
            let s = sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]) * 2.0;
            UnitQuaternion {
                w: (r[0][2] - r[2][0]) / s,
                x: (r[0][1] + r[1][0]) / s,
                y: 0.25 * s,
                z: (r[1][2] + r[2][1]) / s,
            }
        } else {
            let s = sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]) * 2.0;
            UnitQuaternion {
                w: (r[1][0] - r[0][1]) / s,
                x: (r[0][2] + r[2][0]) / s,
                y: (r[1][2] + r[2][1]) / s,
                z: 0.25 * s,
            }
        };
        let q = if q.w < 0.0 { q.negated() } else { q };
        UnitQuaternion::normalize(q.w, q.x, q.y, q.z)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u x v) + 2 u x (u x v)
        let u = self.vector();
        let t = u.cross(v).scale(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * atan2(self.vector().norm(), self.w.abs())
    }

    /// Axis-angle vector of this rotation with the angle in `[0, pi]`.
    ///
    /// At exactly `pi` the quaternion sign is ambiguous; the sign is then
    /// chosen so that the largest-magnitude axis component is positive
    /// (lowest index wins ties).
    pub fn to_rotation_vector(&self) -> Vec3 {
        let mut q = *self;
        if q.w < 0.0 {
            q = q.negated();
        }
        let v = q.vector();
        let sin_half = v.norm();
        if sin_half == 0.0 {
            return Vec3::ZERO;
        }
        if q.w == 0.0 {
            let c = v.to_array();
            let mut k = 0;
            for i in 1..3 {
                if c[i].abs() > c[k].abs() {
                    k = i;
                }
            }
            let v = if c[k] < 0.0 { -v } else { v };
            return v.scale(core::f64::consts::PI / sin_half);
        }
        let angle = 2.0 * atan2(sin_half, q.w);
        v.scale(angle / sin_half)
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(self, to: UnitQuaternion, s: f64) -> UnitQuaternion {
        if s == 0.0 {
            return self;
        }
        if s == 1.0 {
            return to;
        }
        let mut dot = self.dot(to);
        let mut to = to;
        if dot < 0.0 {
            to = to.negated();
            dot = -dot;
        }
        if dot > 0.9995 {
            let q = UnitQuaternion {
                w: self.w + s * (to.w - self.w),
                x: self.x + s * (to.x - self.x),
                y: self.y + s * (to.y - self.y),
                z: self.z + s * (to.z - self.z),
            };
            return UnitQuaternion::normalize(q.w, q.x, q.y, q.z);
        }
        let theta = acos(dot.min(1.0));
        let sin_theta = sin(theta);
        let a = sin((1.0 - s) * theta) / sin_theta;
        let b = sin(s * theta) / sin_theta;
        UnitQuaternion::normalize(
            a * self.w + b * to.w,
            a * self.x + b * to.x,
            a * self.y + b * to.y,
            a * self.z + b * to.z,
        )
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        let (a, b) = (self, o);
        UnitQuaternion::normalize(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Serialize for UnitQuaternion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitQuaternion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        UnitQuaternion::try_new(w, x, y, z).map_err(D::Error::custom)
    }
}

/// Rigid transform: position plus orientation of a frame in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn from_position(position: Vec3) -> Self {
        Pose {
            position,
            orientation: UnitQuaternion::IDENTITY,
        }
    }

    /// Pose translated by `distance` along its own Z axis.
    pub fn offset_along_tool_z(&self, distance: f64) -> Pose {
        let axis = self.orientation.rotate(Vec3::Z);
        Pose::new(self.position + axis.scale(distance), self.orientation)
    }

    /// Pose rotated rigidly about the base Z axis.
    pub fn rotated_about_base_z(&self, angle: f64) -> Pose {
        let r = UnitQuaternion::from_axis_angle(Vec3::Z, angle);
        Pose::new(r.rotate(self.position), r * self.orientation)
    }
}
