//! Skills: reusable robot behaviors written only against the capability
//! contract ([`RobotControl`]), so they run unchanged on every backend.
//!
//! A [`SkillRegistry`] maps names to a parameter schema and a constructor.
//! [`SkillRegistry::instantiate`] validates parameters against the schema;
//! [`SkillInstance::execute`] drives the lifecycle
//! `Idle -> Running -> Succeeded | Failed(code) | Cancelled`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use cellctl_core::{
    Command, ControlError, ErrorCode, GripperState, JointVector, MotionResult, Outcome, Pose, RobotControl,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::config::RobotSystemDescriptor;
use crate::protocol::{decode_joints, decode_number, decode_pose};

/// Default distance of approach and retreat poses from a grasp or place
/// pose, in meters.
pub const DEFAULT_APPROACH_OFFSET: f64 = 0.10;
/// Speed fraction skills use when the environment does not override it.
pub const DEFAULT_SKILL_SPEED: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkillState {
    Idle,
    Running,
    Succeeded,
    Failed(ErrorCode),
    Cancelled,
}

impl SkillState {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            SkillState::Succeeded | SkillState::Failed(_) | SkillState::Cancelled
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            SkillState::Idle => "Idle",
            SkillState::Running => "Running",
            SkillState::Succeeded => "Succeeded",
            SkillState::Failed(_) => "Failed",
            SkillState::Cancelled => "Cancelled",
        }
    }

    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            SkillState::Failed(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for SkillState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkillState::Failed(code) => write!(f, "Failed({code})"),
            other => f.write_str(other.label()),
        }
    }
}

/// `Idle -> Running -> terminal`; terminal states have no way out.
pub fn is_legal_skill_transition(from: SkillState, to: SkillState) -> bool {
    matches!((from, to), (SkillState::Idle, SkillState::Running))
        || (from == SkillState::Running && to.is_terminal())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Pose,
    Joints,
    Number,
    String,
    Bool,
    /// Array of `{"item_pose": pose, "target_pose": pose}`.
    PickPlaceList,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl SkillSpec {
    pub fn new(name: &str, description: &str) -> Self {
        SkillSpec {
            name: name.to_string(),
            description: description.to_string(),
            params: Vec::new(),
        }
    }

    pub fn required(mut self, name: &str, ty: ParamType) -> Self {
        self.params.push(ParamSpec {
            name: name.to_string(),
            ty,
            required: true,
            default: None,
        });
        self
    }

    pub fn optional(mut self, name: &str, ty: ParamType, default: Value) -> Self {
        self.params.push(ParamSpec {
            name: name.to_string(),
            ty,
            required: false,
            default: Some(default),
        });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PickPlace {
    pub item_pose: Pose,
    pub target_pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Pose(Pose),
    Joints(JointVector),
    Number(f64),
    String(String),
    Bool(bool),
    PickPlaceList(Vec<PickPlace>),
}

impl ParamValue {
    fn decode(ty: ParamType, v: &Value, name: &str) -> Result<ParamValue, ControlError> {
        let wrong = |what: &str| ControlError::invalid_params(format!("`{name}` must be {what}"));
        Ok(match ty {
            ParamType::Pose => ParamValue::Pose(decode_pose(v, name)?),
            ParamType::Joints => ParamValue::Joints(decode_joints(v, name)?),
            ParamType::Number => ParamValue::Number(decode_number(v, name)?),
            ParamType::String => ParamValue::String(v.as_str().ok_or_else(|| wrong("a string"))?.to_string()),
            ParamType::Bool => ParamValue::Bool(v.as_bool().ok_or_else(|| wrong("a boolean"))?),
            ParamType::PickPlaceList => ParamValue::PickPlaceList(
                Vec::<PickPlace>::deserialize(v)
                    .map_err(|e| ControlError::invalid_params(format!("`{name}`: {e}")))?,
            ),
        })
    }
}

/// Schema-checked parameters with defaults filled in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkillParams {
    values: BTreeMap<String, ParamValue>,
}

impl SkillParams {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    pub fn pose(&self, name: &str) -> Option<Pose> {
        match self.values.get(name) {
            Some(ParamValue::Pose(p)) => Some(*p),
            _ => None,
        }
    }

    pub fn joints(&self, name: &str) -> Option<JointVector> {
        match self.values.get(name) {
            Some(ParamValue::Joints(q)) => Some(*q),
            _ => None,
        }
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        match self.values.get(name) {
            Some(ParamValue::Number(x)) => Some(*x),
            _ => None,
        }
    }

    pub fn string(&self, name: &str) -> Option<&str> {
        match self.values.get(name) {
            Some(ParamValue::String(s)) => Some(s),
            _ => None,
        }
    }

    pub fn bool(&self, name: &str) -> Option<bool> {
        match self.values.get(name) {
            Some(ParamValue::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn pick_place_list(&self, name: &str) -> Option<&[PickPlace]> {
        match self.values.get(name) {
            Some(ParamValue::PickPlaceList(l)) => Some(l),
            _ => None,
        }
    }
}

type StopHook = Box<dyn Fn() + Send + Sync>;

#[derive(Default)]
struct CancelInner {
    flag: AtomicBool,
    hook: Mutex<Option<StopHook>>,
}

/// Settable-once cancellation flag shared between a running skill and any
/// other thread.
#[derive(Clone, Default)]
pub struct CancelToken(Arc<CancelInner>);

impl CancelToken {
    pub fn new() -> Self {
        CancelToken::default()
    }

    /// `hook` runs once, on the thread that cancels. Use it to halt a motion
    /// in flight, typically by executing `Stop` on the robot.
    pub fn with_stop_hook(hook: impl Fn() + Send + Sync + 'static) -> Self {
        let t = CancelToken::new();
        *t.0.hook.lock().unwrap_or_else(|e| e.into_inner()) = Some(Box::new(hook));
        t
    }

    pub fn cancel(&self) {
        if !self.0.flag.swap(true, Ordering::SeqCst) {
            if let Some(hook) = self.0.hook.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
                hook();
            }
        }
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.flag.load(Ordering::SeqCst)
    }
}

impl fmt::Debug for CancelToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CancelToken")
            .field("cancelled", &self.is_cancelled())
            .finish()
    }
}

/// Cell facts skills may rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillEnv {
    pub named_poses: BTreeMap<String, JointVector>,
    pub grasp_tolerance: f64,
    pub speed_fraction: f64,
}

impl Default for SkillEnv {
    fn default() -> Self {
        SkillEnv {
            named_poses: BTreeMap::new(),
            grasp_tolerance: crate::backends::scene::DEFAULT_GRASP_TOLERANCE,
            speed_fraction: DEFAULT_SKILL_SPEED,
        }
    }
}

impl SkillEnv {
    pub fn from_descriptor(d: &RobotSystemDescriptor) -> Self {
        SkillEnv {
            named_poses: d.named_joint_poses(),
            grasp_tolerance: d.grasp_tolerance(),
            ..SkillEnv::default()
        }
    }
}

/// Progress notifications emitted while a skill runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkillEvent {
    Picked(String),
    Placed(String),
}

/// Why a skill stopped early.
#[derive(Debug, Clone, PartialEq)]
pub enum SkillError {
    Cancelled,
    Failed(ControlError),
}

impl From<ControlError> for SkillError {
    fn from(e: ControlError) -> Self {
        SkillError::Failed(e)
    }
}

impl SkillError {
    fn context(self, prefix: &str) -> SkillError {
        match self {
            SkillError::Failed(e) => {
                SkillError::Failed(ControlError::new(e.code, format!("{prefix}: {}", e.message)))
            }
            c => c,
        }
    }
}

pub type Outputs = BTreeMap<String, Value>;

/// The skill's only way to reach the robot. Every call is a cancellation
/// checkpoint, before and after.
pub struct SkillRun<'a> {
    robot: &'a dyn RobotControl,
    env: &'a SkillEnv,
    cancel: &'a CancelToken,
    on_event: &'a mut dyn FnMut(&SkillEvent),
}

impl<'a> SkillRun<'a> {
    pub fn env(&self) -> &SkillEnv {
        self.env
    }

    pub fn checkpoint(&self) -> Result<(), SkillError> {
        if self.cancel.is_cancelled() {
            Err(SkillError::Cancelled)
        } else {
            Ok(())
        }
    }

    fn guarded<T>(
        &mut self,
        call: impl FnOnce(&dyn RobotControl) -> Result<T, ControlError>,
    ) -> Result<T, SkillError> {
        self.checkpoint()?;
        let r = call(self.robot);
        self.checkpoint()?;
        Ok(r?)
    }

    pub fn execute(&mut self, command: &Command) -> Result<Outcome, SkillError> {
        self.guarded(|r| r.execute(command))
    }

    pub fn move_joints(&mut self, target: JointVector) -> Result<MotionResult, SkillError> {
        let speed_fraction = self.env.speed_fraction;
        motion(self.execute(&Command::MoveJoints {
            target,
            speed_fraction,
        })?)
    }

    pub fn move_linear(&mut self, target: Pose) -> Result<MotionResult, SkillError> {
        let speed_fraction = self.env.speed_fraction;
        motion(self.execute(&Command::MoveLinear {
            target,
            speed_fraction,
        })?)
    }

    pub fn home(&mut self) -> Result<MotionResult, SkillError> {
        motion(self.execute(&Command::Home)?)
    }

    pub fn set_gripper(&mut self, open: bool) -> Result<GripperState, SkillError> {
        match self.execute(&Command::SetGripper { open })? {
            Outcome::Gripper(g) => Ok(g),
            other => Err(ControlError::internal(format!("unexpected gripper outcome {other:?}")).into()),
        }
    }

    pub fn read_gripper(&mut self) -> Result<GripperState, SkillError> {
        self.guarded(|r| r.read_gripper())
    }

    pub fn read_tcp_pose(&mut self) -> Result<Pose, SkillError> {
        self.guarded(|r| r.read_tcp_pose())
    }

    pub fn read_joint_state(&mut self) -> Result<JointVector, SkillError> {
        self.guarded(|r| r.read_joint_state())
    }

    pub fn emit(&mut self, event: SkillEvent) {
        (self.on_event)(&event)
    }
}

fn motion(o: Outcome) -> Result<MotionResult, SkillError> {
    match o {
        Outcome::Motion(m) => Ok(m),
        other => Err(ControlError::internal(format!("unexpected motion outcome {other:?}")).into()),
    }
}

/// Behavior of one skill. `outputs` may be filled progressively; it is
/// reported whatever the outcome.
pub trait Skill: Send {
    fn run(&mut self, run: &mut SkillRun<'_>, outputs: &mut Outputs) -> Result<(), SkillError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillResult {
    /// Always terminal.
    pub state: SkillState,
    pub detail: String,
    pub outputs: Outputs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkillResultDoc {
    state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    code: Option<ErrorCode>,
    detail: String,
    outputs: Outputs,
}

impl SkillResult {
    pub fn succeeded(&self) -> bool {
        self.state == SkillState::Succeeded
    }

    /// `{"state", "code" (failures only), "detail", "outputs"}`.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(SkillResultDoc {
            state: self.state.label().to_string(),
            code: self.state.code(),
            detail: self.detail.clone(),
            outputs: self.outputs.clone(),
        })
        .expect("skill result serializes")
    }

    pub fn from_json(v: &Value) -> Result<SkillResult, String> {
        let doc = SkillResultDoc::deserialize(v).map_err(|e| e.to_string())?;
        let state = match (doc.state.as_str(), doc.code) {
            ("Succeeded", None) => SkillState::Succeeded,
            ("Cancelled", None) => SkillState::Cancelled,
            ("Failed", Some(code)) => SkillState::Failed(code),
            (s, c) => return Err(format!("not a terminal skill state: {s} {c:?}")),
        };
        Ok(SkillResult {
            state,
            detail: doc.detail,
            outputs: doc.outputs,
        })
    }
}

/// A skill bound to its parameters, with its lifecycle record.
pub struct SkillInstance {
    name: String,
    skill: Box<dyn Skill>,
    transitions: Vec<SkillState>,
}

impl SkillInstance {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state(&self) -> SkillState {
        *self.transitions.last().expect("starts Idle")
    }

    /// Every state entered so far, starting with `Idle`.
    pub fn transitions(&self) -> &[SkillState] {
        &self.transitions
    }

    fn enter(&mut self, to: SkillState) {
        debug_assert!(
            is_legal_skill_transition(self.state(), to),
            "{} -> {}",
            self.state(),
            to
        );
        self.transitions.push(to);
    }

    /// Runs the skill to a terminal state. An instance runs at most once;
    /// later calls report `Failed(INVALID_PARAMS)` and change nothing.
    pub fn execute(
        &mut self,
        robot: &dyn RobotControl,
        env: &SkillEnv,
        cancel: &CancelToken,
        on_event: &mut dyn FnMut(&SkillEvent),
    ) -> SkillResult {
        if self.state() != SkillState::Idle {
            return SkillResult {
                state: SkillState::Failed(ErrorCode::InvalidParams),
                detail: format!("skill instance already ran (state {})", self.state()),
                outputs: Outputs::new(),
            };
        }
        self.enter(SkillState::Running);
        let mut outputs = Outputs::new();
        let mut run = SkillRun {
            robot,
            env,
            cancel,
            on_event,
        };
        let outcome = run
            .checkpoint()
            .and_then(|()| self.skill.run(&mut run, &mut outputs));
        let (state, detail) = match outcome {
            Ok(()) => (SkillState::Succeeded, format!("{} succeeded", self.name)),
            Err(SkillError::Cancelled) => (SkillState::Cancelled, format!("{} cancelled", self.name)),
            Err(SkillError::Failed(e)) => (SkillState::Failed(e.code), e.message),
        };
        self.enter(state);
        SkillResult {
            state,
            detail,
            outputs,
        }
    }
}

pub type SkillConstructor = Arc<dyn Fn(&SkillParams) -> Box<dyn Skill> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkillRegistryError {
    #[error("skill {0:?} is already registered")]
    Duplicate(String),
    #[error("skill {skill:?}: {message}")]
    InvalidSpec { skill: String, message: String },
}

#[derive(Clone, Default)]
pub struct SkillRegistry {
    skills: BTreeMap<String, (SkillSpec, SkillConstructor)>,
}

impl SkillRegistry {
    pub fn new() -> Self {
        SkillRegistry::default()
    }

    /// move_to_named_pose, home, pick, place and pick_and_place.
    pub fn with_builtins() -> Self {
        let mut r = SkillRegistry::new();
        for (spec, ctor) in builtin::all() {
            r.register(spec, ctor).expect("built-in skills are well formed");
        }
        r
    }

    pub fn register(
        &mut self,
        spec: SkillSpec,
        constructor: SkillConstructor,
    ) -> Result<(), SkillRegistryError> {
        let invalid = |message: String| SkillRegistryError::InvalidSpec {
            skill: spec.name.clone(),
            message,
        };
        if self.skills.contains_key(&spec.name) {
            return Err(SkillRegistryError::Duplicate(spec.name));
        }
        for (i, p) in spec.params.iter().enumerate() {
            if spec.params[..i].iter().any(|q| q.name == p.name) {
                return Err(invalid(format!("parameter `{}` declared twice", p.name)));
            }
            match (&p.default, p.required) {
                (Some(_), true) => {
                    return Err(invalid(format!("required parameter `{}` has a default", p.name)))
                }
                (None, false) => {
                    return Err(invalid(format!(
                        "optional parameter `{}` needs a default",
                        p.name
                    )))
                }
                (Some(d), false) => {
                    ParamValue::decode(p.ty, d, &p.name).map_err(|e| invalid(e.message))?;
                }
                (None, true) => {}
            }
        }
        self.skills.insert(spec.name.clone(), (spec, constructor));
        Ok(())
    }

    pub fn spec(&self, name: &str) -> Option<&SkillSpec> {
        self.skills.get(name).map(|(s, _)| s)
    }

    pub fn specs(&self) -> impl Iterator<Item = &SkillSpec> {
        self.skills.values().map(|(s, _)| s)
    }

    /// Machine-readable schema listing.
    pub fn list_json(&self) -> Value {
        json!({ "skills": self.specs().collect::<Vec<_>>() })
    }

    /// Validates `params` against the schema. Unknown skills, unknown or
    /// missing parameters and type mismatches are `INVALID_PARAMS`.
    pub fn instantiate(
        &self,
        name: &str,
        params: &Map<String, Value>,
    ) -> Result<SkillInstance, ControlError> {
        let (spec, ctor) = self
            .skills
            .get(name)
            .ok_or_else(|| ControlError::invalid_params(format!("unknown skill {name:?}")))?;
        if let Some(k) = params.keys().find(|k| !spec.params.iter().any(|p| &p.name == *k)) {
            return Err(ControlError::invalid_params(format!(
                "{name}: unknown parameter `{k}`"
            )));
        }
        let mut values = BTreeMap::new();
        for p in &spec.params {
            let raw = match (params.get(&p.name), &p.default) {
                (Some(v), _) => v,
                (None, Some(d)) => d,
                (None, None) => {
                    return Err(ControlError::invalid_params(format!(
                        "{name}: missing required parameter `{}`",
                        p.name
                    )))
                }
            };
            values.insert(p.name.clone(), ParamValue::decode(p.ty, raw, &p.name)?);
        }
        let skill = ctor(&SkillParams { values });
        Ok(SkillInstance {
            name: name.to_string(),
            skill,
            transitions: vec![SkillState::Idle],
        })
    }
}

/// Pick one item: open, approach, descend, close, verify, retreat.
/// Returns the held item's id.
pub fn pick(run: &mut SkillRun<'_>, item_pose: Pose, approach_offset: f64) -> Result<String, SkillError> {
    check_offset(approach_offset)?;
    let approach = item_pose.offset_along_tool_z(-approach_offset);
    run.set_gripper(true)?;
    run.move_linear(approach)?;
    run.move_linear(item_pose)?;
    let grip = run.set_gripper(false)?;
    let Some(item) = grip.holding else {
        let p = item_pose.position;
        return Err(ControlError::new(
            ErrorCode::GraspFailed,
            format!(
                "no item within grasp tolerance of ({:.4}, {:.4}, {:.4})",
                p.x, p.y, p.z
            ),
        )
        .into());
    };
    run.emit(SkillEvent::Picked(item.clone()));
    run.move_linear(approach)?;
    Ok(item)
}

/// Place the held item: approach, descend, open, verify, retreat.
/// Returns the released item's id.
pub fn place(run: &mut SkillRun<'_>, target_pose: Pose, approach_offset: f64) -> Result<String, SkillError> {
    check_offset(approach_offset)?;
    let Some(item) = run.read_gripper()?.holding else {
        return Err(ControlError::invalid_params("place needs a held item").into());
    };
    let approach = target_pose.offset_along_tool_z(-approach_offset);
    run.move_linear(approach)?;
    run.move_linear(target_pose)?;
    run.set_gripper(true)?;
    let released_at = run.read_tcp_pose()?.position;
    let miss = released_at.distance(target_pose.position);
    if miss > run.env().grasp_tolerance {
        return Err(ControlError::new(
            ErrorCode::Reachability,
            format!("{item} released {miss:.4} m from the target"),
        )
        .into());
    }
    run.emit(SkillEvent::Placed(item.clone()));
    run.move_linear(approach)?;
    Ok(item)
}

fn check_offset(offset: f64) -> Result<(), SkillError> {
    if offset > 0.0 && offset.is_finite() {
        Ok(())
    } else {
        Err(ControlError::invalid_params(format!("approach_offset must be positive, got {offset}")).into())
    }
}

/// Pick and place each pair in order; stops at the first failure.
pub fn pick_and_place(
    run: &mut SkillRun<'_>,
    items: &[PickPlace],
    approach_offset: f64,
    outputs: &mut Outputs,
) -> Result<(), SkillError> {
    outputs.insert("completed".into(), json!(0));
    if items.is_empty() {
        return Err(ControlError::invalid_params("items must not be empty").into());
    }
    for (i, pp) in items.iter().enumerate() {
        let ctx = |e: SkillError| e.context(&format!("item {}", i + 1));
        pick(run, pp.item_pose, approach_offset).map_err(ctx)?;
        place(run, pp.target_pose, approach_offset).map_err(ctx)?;
        outputs.insert("completed".into(), json!(i + 1));
    }
    Ok(())
}

mod builtin {
    use super::*;

    pub(super) fn all() -> Vec<(SkillSpec, SkillConstructor)> {
        let offset = || json!(DEFAULT_APPROACH_OFFSET);
        vec![
            (
                SkillSpec::new(
                    "move_to_named_pose",
                    "Joint move to a pose named in the descriptor",
                )
                .required("pose_name", ParamType::String),
                Arc::new(|p: &SkillParams| {
                    Box::new(MoveToNamedPose {
                        name: p.string("pose_name").expect("schema").to_string(),
                    }) as Box<dyn Skill>
                }),
            ),
            (
                SkillSpec::new("home", "Move to the robot's home configuration"),
                Arc::new(|_: &SkillParams| Box::new(Home) as Box<dyn Skill>),
            ),
            (
                SkillSpec::new(
                    "pick",
                    "Grasp the item at item_pose, approaching along the tool axis",
                )
                .required("item_pose", ParamType::Pose)
                .optional("approach_offset", ParamType::Number, offset()),
                Arc::new(|p: &SkillParams| {
                    Box::new(Pick {
                        item_pose: p.pose("item_pose").expect("schema"),
                        offset: p.number("approach_offset").expect("schema"),
                    }) as Box<dyn Skill>
                }),
            ),
            (
                SkillSpec::new("place", "Release the held item at target_pose")
                    .required("target_pose", ParamType::Pose)
                    .optional("approach_offset", ParamType::Number, offset()),
                Arc::new(|p: &SkillParams| {
                    Box::new(Place {
                        target_pose: p.pose("target_pose").expect("schema"),
                        offset: p.number("approach_offset").expect("schema"),
                    }) as Box<dyn Skill>
                }),
            ),
            (
                SkillSpec::new("pick_and_place", "Pick and place each listed item in order")
                    .required("items", ParamType::PickPlaceList)
                    .optional("approach_offset", ParamType::Number, offset()),
                Arc::new(|p: &SkillParams| {
                    Box::new(PickAndPlace {
                        items: p.pick_place_list("items").expect("schema").to_vec(),
                        offset: p.number("approach_offset").expect("schema"),
                    }) as Box<dyn Skill>
                }),
            ),
        ]
    }

    struct MoveToNamedPose {
        name: String,
    }

    impl Skill for MoveToNamedPose {
        fn run(&mut self, run: &mut SkillRun<'_>, outputs: &mut Outputs) -> Result<(), SkillError> {
            let q =
                run.env().named_poses.get(&self.name).copied().ok_or_else(|| {
                    ControlError::invalid_params(format!("unknown named pose {:?}", self.name))
                })?;
            let m = run.move_joints(q)?;
            outputs.insert("joints".into(), json!(m.final_joints));
            Ok(())
        }
    }

    struct Home;

    impl Skill for Home {
        fn run(&mut self, run: &mut SkillRun<'_>, outputs: &mut Outputs) -> Result<(), SkillError> {
            let m = run.home()?;
            outputs.insert("joints".into(), json!(m.final_joints));
            Ok(())
        }
    }

    struct Pick {
        item_pose: Pose,
        offset: f64,
    }

    impl Skill for Pick {
        fn run(&mut self, run: &mut SkillRun<'_>, outputs: &mut Outputs) -> Result<(), SkillError> {
            let item = pick(run, self.item_pose, self.offset)?;
            outputs.insert("item".into(), json!(item));
            Ok(())
        }
    }

    struct Place {
        target_pose: Pose,
        offset: f64,
    }

    impl Skill for Place {
        fn run(&mut self, run: &mut SkillRun<'_>, outputs: &mut Outputs) -> Result<(), SkillError> {
            let item = place(run, self.target_pose, self.offset)?;
            outputs.insert("item".into(), json!(item));
            Ok(())
        }
    }

    struct PickAndPlace {
        items: Vec<PickPlace>,
        offset: f64,
    }

    impl Skill for PickAndPlace {
        fn run(&mut self, run: &mut SkillRun<'_>, outputs: &mut Outputs) -> Result<(), SkillError> {
            pick_and_place(run, &self.items, self.offset, outputs)
        }
    }
}
