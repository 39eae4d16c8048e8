//! Seeded scene generation for the bin-picking demo.
//!
//! Candidate item poses come from forward kinematics of random joint
//! samples around the `above-bin` pose, projected onto the bin floor and
//! clamped into the bin. A candidate is kept only if the whole pick and
//! place sequence for it, continuing from where the previous item left the
//! arm, plans without an IK failure, and it is not crowding another item.

use cellctl_core::{clamp_to_limits, forward_kinematics, IkOptions, JointVector, KinematicModel, Pose, DOF};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::apps::binpick::place_target;
use crate::backends::LinearPlanner;
use crate::skills::DEFAULT_APPROACH_OFFSET;

/// Bin geometry relative to the TCP at the `above-bin` pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinRegion {
    /// Bin floor below the above-bin TCP height, in meters.
    pub depth: f64,
    /// Half width of the square bin floor, in meters.
    pub half_width: f64,
    /// Per-joint sampling range around the above-bin pose, in radians.
    pub joint_spread: f64,
    /// Minimum distance between item centers, in meters.
    pub min_spacing: f64,
}

impl Default for BinRegion {
    fn default() -> Self {
        BinRegion {
            depth: 0.15,
            half_width: 0.08,
            joint_spread: 0.15,
            min_spacing: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("placed only {placed} of {wanted} items after {attempts} attempts")]
pub struct GenerationError {
    pub placed: usize,
    pub wanted: usize,
    pub attempts: usize,
}

pub struct SceneGenerator<'a> {
    pub model: &'a KinematicModel,
    pub home: JointVector,
    pub above_bin: JointVector,
    pub region: BinRegion,
    pub linear_waypoints: usize,
    pub ik: IkOptions,
}

pub fn item_id(index: usize) -> String {
    format!("item-{:02}", index + 1)
}

const ATTEMPTS_PER_ITEM: usize = 200;

impl SceneGenerator<'_> {
    /// `n` item poses, in pick order, for `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<Pose>, GenerationError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = forward_kinematics(self.model, &self.above_bin).position;
        let floor = center.z - self.region.depth;
        let mut items: Vec<Pose> = Vec::with_capacity(n);
        let mut arm = self.home;
        let mut attempts = 0;
        while items.len() < n {
            if attempts >= ATTEMPTS_PER_ITEM * n.max(1) {
                return Err(GenerationError {
                    placed: items.len(),
                    wanted: n,
                    attempts,
                });
            }
            attempts += 1;
            let mut q = self.above_bin;
            for j in 0..DOF {
                q[j] += rng.gen_range(-self.region.joint_spread..=self.region.joint_spread);
            }
            let q = clamp_to_limits(self.model, &q).0;
            let mut pose = forward_kinematics(self.model, &q);
            let hw = self.region.half_width;
            pose.position.x = pose.position.x.clamp(center.x - hw, center.x + hw);
            pose.position.y = pose.position.y.clamp(center.y - hw, center.y + hw);
            pose.position.z = floor;
            if items
                .iter()
                .any(|p| p.position.distance(pose.position) < self.region.min_spacing)
            {
                continue;
            }
            if let Some(end) = self.plan_cycle(arm, &pose) {
                arm = end;
                items.push(pose);
            }
        }
        Ok(items)
    }

    /// Joint state after picking `item` and placing it at its target,
    /// or `None` if any motion of the cycle fails to plan.
    fn plan_cycle(&self, from: JointVector, item: &Pose) -> Option<JointVector> {
        let target = place_target(item);
        let up = |p: &Pose| p.offset_along_tool_z(-DEFAULT_APPROACH_OFFSET);
        let path = [up(item), *item, up(item), up(&target), target, up(&target)];
        let mut q = from;
        for goal in path {
            for step in LinearPlanner::new(self.model, q, goal, self.linear_waypoints, self.ik) {
                q = step.ok()?;
            }
        }
        Some(q)
    }
}
