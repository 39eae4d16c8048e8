//! Bin-picking cell: empty the bin into a drop zone a quarter turn away.
//!
//! This is the cell-specific part of the software. It uses the capability
//! contract and the skill layer only, so the same code drives a simulator,
//! a recorder or a remote cell depending on the descriptor.

use std::f64::consts::FRAC_PI_2;

use cellctl_core::{Pose, RobotControl};
use serde_json::{json, Map, Value};

use crate::skills::{
    CancelToken, PickPlace, SkillEnv, SkillEvent, SkillRegistry, SkillResult, SkillState,
    DEFAULT_APPROACH_OFFSET,
};

/// Where an item picked at `item` is dropped: the same pose turned a
/// quarter turn clockwise about the base Z axis.
pub fn place_target(item: &Pose) -> Pose {
    item.rotated_about_base_z(-FRAC_PI_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinPickJob {
    pub items: Vec<PickPlace>,
    pub approach_offset: f64,
}

impl BinPickJob {
    /// Items in pick order; each goes to its [`place_target`].
    pub fn from_item_poses(poses: impl IntoIterator<Item = Pose>) -> Self {
        BinPickJob {
            items: poses
                .into_iter()
                .map(|p| PickPlace {
                    item_pose: p,
                    target_pose: place_target(&p),
                })
                .collect(),
            approach_offset: DEFAULT_APPROACH_OFFSET,
        }
    }
}

fn run_skill(
    robot: &dyn RobotControl,
    skills: &SkillRegistry,
    env: &SkillEnv,
    cancel: &CancelToken,
    on_event: &mut dyn FnMut(&SkillEvent),
    name: &str,
    params: Value,
) -> SkillResult {
    let params: Map<String, Value> = params.as_object().cloned().unwrap_or_default();
    match skills.instantiate(name, &params) {
        Ok(mut skill) => skill.execute(robot, env, cancel, on_event),
        Err(e) => SkillResult {
            state: SkillState::Failed(e.code),
            detail: e.message,
            outputs: Default::default(),
        },
    }
}

/// Home, pick and place every item, home again. Returns the
/// `pick_and_place` result (with `outputs.completed`) or the first failure.
pub fn run(
    robot: &dyn RobotControl,
    skills: &SkillRegistry,
    env: &SkillEnv,
    job: &BinPickJob,
    cancel: &CancelToken,
    on_event: &mut dyn FnMut(&SkillEvent),
) -> SkillResult {
    let home = json!({ "pose_name": "home" });
    let r = run_skill(
        robot,
        skills,
        env,
        cancel,
        on_event,
        "move_to_named_pose",
        home.clone(),
    );
    if !r.succeeded() {
        return r;
    }
    let params = json!({ "items": job.items, "approach_offset": job.approach_offset });
    let result = run_skill(robot, skills, env, cancel, on_event, "pick_and_place", params);
    if !result.succeeded() {
        return result;
    }
    let back = run_skill(robot, skills, env, cancel, on_event, "move_to_named_pose", home);
    if back.succeeded() {
        result
    } else {
        back
    }
}
