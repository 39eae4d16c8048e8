//! Reference kinematics for tests: plain 4x4 homogeneous matrices built
//! from the four elementary DH transforms and multiplied out one by one.

#![allow(dead_code)]

use cellctl_core::{KinematicModel, Pose};

pub type M4 = [[f64; 4]; 4];

pub const I4: M4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

pub fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn rot_z(t: f64) -> M4 {
    let mut m = I4;
    m[0][0] = t.cos();
    m[0][1] = -t.sin();
    m[1][0] = t.sin();
    m[1][1] = t.cos();
    m
}

fn rot_x(t: f64) -> M4 {
    let mut m = I4;
    m[1][1] = t.cos();
    m[1][2] = -t.sin();
    m[2][1] = t.sin();
    m[2][2] = t.cos();
    m
}

fn trans(x: f64, y: f64, z: f64) -> M4 {
    let mut m = I4;
    m[0][3] = x;
    m[1][3] = y;
    m[2][3] = z;
    m
}

/// Base-to-flange transform: product of RotZ(q+offset) TransZ(d) TransX(a) RotX(alpha).
pub fn fk(model: &KinematicModel, q: &[f64; 6]) -> M4 {
    let mut t = I4;
    for (row, qi) in model.rows().iter().zip(q) {
        t = mul(&t, &rot_z(qi + row.theta_offset));
        t = mul(&t, &trans(0.0, 0.0, row.d));
        t = mul(&t, &trans(row.a, 0.0, 0.0));
        t = mul(&t, &rot_x(row.alpha));
    }
    t
}

pub fn rotation_of(p: &Pose) -> [[f64; 3]; 3] {
    let [w, x, y, z] = p.orientation.to_array();
    [
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
    ]
}

/// Angle between two rotation matrices. Uses the skew part of `A^T B`,
/// which stays accurate for small angles, and the trace to pick the branch.
pub fn rotation_distance(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| a[k][i] * b[k][j]).sum();
        }
    }
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() / 2.0;
    let c = (r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0;
    s.atan2(c)
}

pub fn rotation_block(m: &M4) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[i][j]))
}

pub fn translation(m: &M4) -> [f64; 3] {
    [m[0][3], m[1][3], m[2][3]]
}

/// Position and rotation deviation of `pose` from the oracle transform.
pub fn deviation(pose: &Pose, m: &M4) -> (f64, f64) {
    let t = translation(m);
    let p = pose.position.to_array();
    let dp = ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2)).sqrt();
    (dp, rotation_distance(&rotation_of(pose), &rotation_block(m)))
}

/// Geometric Jacobian by central differences of the oracle: linear part
/// from translation, angular part from `dR R^T`.
pub fn fd_jacobian(model: &KinematicModel, q: &[f64; 6], h: f64) -> [[f64; 6]; 6] {
    let r0 = rotation_block(&fk(model, q));
    let mut jac = [[0.0; 6]; 6];
    for col in 0..6 {
        let (mut qp, mut qm) = (*q, *q);
        qp[col] += h;
        qm[col] -= h;
        let (tp, tm) = (fk(model, &qp), fk(model, &qm));
        let (pp, pm) = (translation(&tp), translation(&tm));
        let (rp, rm) = (rotation_block(&tp), rotation_block(&tm));
        let mut w = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                w[i][j] = (0..3).map(|k| (rp[i][k] - rm[i][k]) / (2.0 * h) * r0[j][k]).sum();
            }
        }
        for i in 0..3 {
            jac[i][col] = (pp[i] - pm[i]) / (2.0 * h);
        }
        jac[3][col] = (w[2][1] - w[1][2]) / 2.0;
        jac[4][col] = (w[0][2] - w[2][0]) / 2.0;
        jac[5][col] = (w[1][0] - w[0][1]) / 2.0;
    }
    jac
}
