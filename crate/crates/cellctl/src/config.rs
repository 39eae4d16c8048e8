//! System descriptors: one JSON document that determines the whole cell
//! setup (robot identity and kinematics, interface bindings, named poses,
//! scene, motion settings).
//!
//! Parsing is strict: unknown fields are errors. [`RobotSystemDescriptor::validate`]
//! reports every violated invariant with a dotted path such as
//! `robot.kinematics.joint_min[2]`. [`RobotSystemDescriptor::to_canonical_string`]
//! writes sorted keys, two-space indentation and a trailing newline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use cellctl_core::{DhRow, IkOptions, JointVector, KinematicModel, Pose, DOF};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::scene::DEFAULT_GRASP_TOLERANCE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSystemDescriptor {
    pub shell: Shell,
    pub robot: RobotSection,
    pub interfaces: Vec<InterfaceBinding>,
    #[serde(default)]
    pub named_poses: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSection>,
    #[serde(default)]
    pub motion: MotionSection,
}

/// Identity of the description document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shell {
    pub id: String,
    pub id_short: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    pub manufacturer: String,
    pub model: String,
    pub dof: u32,
    pub kinematics: KinematicsSection,
    pub home: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicsSection {
    pub dh: Vec<DhRow>,
    pub joint_min: Vec<f64>,
    pub joint_max: Vec<f64>,
    pub max_joint_velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceBinding {
    pub interface_type: String,
    pub active: bool,
    /// Backend-specific settings, e.g. `endpoint` for the wire backend.
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    #[serde(default = "default_grasp_tolerance")]
    pub grasp_tolerance: f64,
    #[serde(default)]
    pub items: Vec<ItemSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemSpec {
    pub id: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSection {
    #[serde(default = "default_linear_waypoints")]
    pub linear_waypoints: u32,
    #[serde(default)]
    pub ik: IkSection,
    /// Period of state events while the robot is moving.
    #[serde(default = "default_monitor_period_ms")]
    pub monitor_period_ms: u64,
}

impl Default for MotionSection {
    fn default() -> Self {
        MotionSection {
            linear_waypoints: default_linear_waypoints(),
            ik: IkSection::default(),
            monitor_period_ms: default_monitor_period_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkSection {
    pub max_iterations: u32,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    pub damping_lambda: f64,
}

impl Default for IkSection {
    fn default() -> Self {
        let o = IkOptions::default();
        IkSection {
            max_iterations: o.max_iterations,
            position_tolerance: o.position_tolerance,
            orientation_tolerance: o.orientation_tolerance,
            damping_lambda: o.damping_lambda,
        }
    }
}

fn default_grasp_tolerance() -> f64 {
    DEFAULT_GRASP_TOLERANCE
}

fn default_linear_waypoints() -> u32 {
    50
}

fn default_monitor_period_ms() -> u64 {
    500
}

/// A document that could not be turned into a descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ParseError {
    /// Dotted path of the offending field; empty for the document root.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "." } else { &self.path };
        write!(f, "{} {} {}", self.severity, path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    /// Acceptable iff there are no error findings.
    pub fn is_ok(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Parses a descriptor document, reporting the path of the first problem.
pub fn parse_descriptor(text: &str) -> Result<RobotSystemDescriptor, ParseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let descriptor = serde_path_to_error::deserialize(&mut *de).map_err(|e| {
        let mut path = dotted(e.path());
        let message = clean_message(e.into_inner());
        // Missing fields are reported at their parent; name the field itself.
        if let Some(field) = message
            .strip_prefix("missing field `")
            .and_then(|r| r.split('`').next())
        {
            path = if path.is_empty() {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
        }
        ParseError { path, message }
    })?;
    de.end().map_err(|e| ParseError {
        path: String::new(),
        message: clean_message(e),
    })?;
    Ok(descriptor)
}

fn clean_message(e: serde_json::Error) -> String {
    let mut message = e.to_string();
    if let Some(cut) = message.find(" at line ") {
        message.truncate(cut);
    }
    message
}

fn dotted(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("[{index}]")),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(key);
            }
            Segment::Unknown => {}
        }
    }
    out
}

pub fn load_descriptor(path: impl AsRef<Path>) -> Result<RobotSystemDescriptor, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_descriptor(&text)?)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn joints_of(v: &[f64]) -> Option<JointVector> {
    <[f64; DOF]>::try_from(v).ok().map(JointVector)
}

impl RobotSystemDescriptor {
    /// Checks every invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();

        if self.shell.id.trim().is_empty() {
            r.error("shell.id", "must not be empty");
        }
        if !is_identifier(&self.shell.id_short) {
            r.error(
                "shell.id_short",
                format!("{:?} is not an identifier", self.shell.id_short),
            );
        }
        if self.robot.manufacturer.trim().is_empty() {
            r.error("robot.manufacturer", "must not be empty");
        }
        if self.robot.dof as usize != DOF {
            r.error("robot.dof", format!("must be {DOF}, got {}", self.robot.dof));
        }

        let k = &self.robot.kinematics;
        if k.dh.len() != DOF {
            r.error(
                "robot.kinematics.dh",
                format!("needs {DOF} rows, got {}", k.dh.len()),
            );
        }
        for (i, row) in k.dh.iter().enumerate() {
            if ![row.theta_offset, row.d, row.a, row.alpha]
                .iter()
                .all(|x| x.is_finite())
            {
                r.error(format!("robot.kinematics.dh[{i}]"), "entries must be finite");
            }
        }
        for (name, v) in [
            ("joint_min", &k.joint_min),
            ("joint_max", &k.joint_max),
            ("max_joint_velocity", &k.max_joint_velocity),
        ] {
            if v.len() != DOF {
                r.error(
                    format!("robot.kinematics.{name}"),
                    format!("needs {DOF} values, got {}", v.len()),
                );
            }
        }
        for (i, (min, max)) in k.joint_min.iter().zip(&k.joint_max).enumerate() {
            if !(min < max) {
                r.error(
                    format!("robot.kinematics.joint_min[{i}]"),
                    format!("joint_min {min} must be below joint_max {max}"),
                );
            }
        }
        for (i, v) in k.max_joint_velocity.iter().enumerate() {
            if !(*v > 0.0 && v.is_finite()) {
                r.error(
                    format!("robot.kinematics.max_joint_velocity[{i}]"),
                    format!("{v} must be positive"),
                );
            }
        }

        let model = self.kinematic_model().ok();
        let check_joints = |r: &mut ValidationReport, path: &str, v: &[f64]| match joints_of(v) {
            None => r.error(path, format!("needs {DOF} joint values, got {}", v.len())),
            Some(q) => {
                if let Some(m) = &model {
                    if let Some(j) = m.first_limit_violation(&q) {
                        r.error(
                            path,
                            format!(
                                "joint {} value {} outside [{}, {}]",
                                j + 1,
                                q[j],
                                m.joint_min()[j],
                                m.joint_max()[j]
                            ),
                        );
                    }
                }
            }
        };
        check_joints(&mut r, "robot.home", &self.robot.home);
        for (name, v) in &self.named_poses {
            check_joints(&mut r, &format!("named_poses.{name}"), v);
        }

        let active = self.interfaces.iter().filter(|b| b.active).count();
        if active != 1 {
            r.error(
                "interfaces",
                format!("exactly one interface must be active at runtime, found {active}"),
            );
        }
        for (i, b) in self.interfaces.iter().enumerate() {
            if b.interface_type.trim().is_empty() {
                r.error(format!("interfaces[{i}].interface_type"), "must not be empty");
            }
        }

        if let Some(scene) = &self.scene {
            if !(scene.grasp_tolerance > 0.0 && scene.grasp_tolerance.is_finite()) {
                r.error(
                    "scene.grasp_tolerance",
                    format!("{} must be positive", scene.grasp_tolerance),
                );
            }
            let mut seen = BTreeSet::new();
            for (i, item) in scene.items.iter().enumerate() {
                if item.id.is_empty() {
                    r.error(format!("scene.items[{i}].id"), "must not be empty");
                } else if !seen.insert(item.id.as_str()) {
                    r.error(
                        format!("scene.items[{i}].id"),
                        format!("duplicate item id {:?}", item.id),
                    );
                }
            }
        }

        let m = &self.motion;
        if m.linear_waypoints < 1 {
            r.error("motion.linear_waypoints", "must be at least 1");
        }
        if m.monitor_period_ms < 1 {
            r.error("motion.monitor_period_ms", "must be at least 1");
        }
        if m.ik.max_iterations < 1 {
            r.error("motion.ik.max_iterations", "must be at least 1");
        }
        for (name, v) in [
            ("position_tolerance", m.ik.position_tolerance),
            ("orientation_tolerance", m.ik.orientation_tolerance),
            ("damping_lambda", m.ik.damping_lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                r.error(format!("motion.ik.{name}"), format!("{v} must be positive"));
            }
        }
        if !self.named_poses.contains_key("home") {
            r.warning("named_poses", "no `home` pose; skills fall back to robot.home");
        }
        r
    }

    /// Sorted keys, two-space indentation, LF line endings, trailing newline.
    pub fn to_canonical_string(&self) -> String {
        // Going through `Value` sorts object keys.
        let value = serde_json::to_value(self).expect("descriptor serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn kinematic_model(&self) -> Result<KinematicModel, String> {
        let k = &self.robot.kinematics;
        let rows: [DhRow; DOF] =
            k.dh.clone()
                .try_into()
                .map_err(|_| format!("needs {DOF} DH rows, got {}", k.dh.len()))?;
        let arr = |v: &[f64], name: &str| {
            <[f64; DOF]>::try_from(v).map_err(|_| format!("{name} needs {DOF} values, got {}", v.len()))
        };
        KinematicModel::new(
            rows,
            arr(&k.joint_min, "joint_min")?,
            arr(&k.joint_max, "joint_max")?,
            arr(&k.max_joint_velocity, "max_joint_velocity")?,
        )
        .map_err(|e| e.to_string())
    }

    pub fn home(&self) -> Option<JointVector> {
        joints_of(&self.robot.home)
    }

    pub fn named_pose(&self, name: &str) -> Option<JointVector> {
        self.named_poses.get(name).and_then(|v| joints_of(v))
    }

    /// Named poses that are well formed.
    pub fn named_joint_poses(&self) -> BTreeMap<String, JointVector> {
        self.named_poses
            .iter()
            .filter_map(|(k, v)| Some((k.clone(), joints_of(v)?)))
            .collect()
    }

    pub fn ik_options(&self) -> IkOptions {
        let ik = &self.motion.ik;
        IkOptions {
            max_iterations: ik.max_iterations,
            position_tolerance: ik.position_tolerance,
            orientation_tolerance: ik.orientation_tolerance,
            damping_lambda: ik.damping_lambda,
        }
    }

    pub fn grasp_tolerance(&self) -> f64 {
        self.scene
            .as_ref()
            .map_or(DEFAULT_GRASP_TOLERANCE, |s| s.grasp_tolerance)
    }

    /// The single active binding, if exactly one is active.
    pub fn active_interface(&self) -> Option<&InterfaceBinding> {
        let mut active = self.interfaces.iter().filter(|b| b.active);
        match (active.next(), active.next()) {
            (Some(b), None) => Some(b),
            _ => None,
        }
    }

    /// Marks exactly the first binding of `interface_type` active.
    pub fn activate(&mut self, interface_type: &str) -> bool {
        let Some(idx) = self
            .interfaces
            .iter()
            .position(|b| b.interface_type == interface_type)
        else {
            return false;
        };
        for (i, b) in self.interfaces.iter_mut().enumerate() {
            b.active = i == idx;
        }
        true
    }
}
