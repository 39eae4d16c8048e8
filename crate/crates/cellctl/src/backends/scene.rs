//! Desk-scale stand-in for a bin-picking cell: named items with poses and
//! proximity grasping.

use std::collections::BTreeMap;

use cellctl_core::{JointVector, Pose};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default proximity radius for a successful grasp, in meters.
pub const DEFAULT_GRASP_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneItem {
    pub id: String,
    pub pose: Pose,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("scene item id {0:?} already exists")]
    DuplicateId(String),
    #[error("grasp_tolerance must be positive")]
    InvalidTolerance,
}

/// Items keyed by id; at most one is held.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    items: BTreeMap<String, SceneItem>,
    grasp_tolerance: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            items: BTreeMap::new(),
            grasp_tolerance: DEFAULT_GRASP_TOLERANCE,
        }
    }
}

impl Scene {
    pub fn new(grasp_tolerance: f64) -> Result<Self, SceneError> {
        if !(grasp_tolerance > 0.0 && grasp_tolerance.is_finite()) {
            return Err(SceneError::InvalidTolerance);
        }
        Ok(Scene {
            items: BTreeMap::new(),
            grasp_tolerance,
        })
    }

    pub fn grasp_tolerance(&self) -> f64 {
        self.grasp_tolerance
    }

    pub fn spawn(&mut self, id: &str, pose: Pose) -> Result<(), SceneError> {
        if self.items.contains_key(id) {
            return Err(SceneError::DuplicateId(id.to_string()));
        }
        self.items.insert(
            id.to_string(),
            SceneItem {
                id: id.to_string(),
                pose,
                held: false,
            },
        );
        Ok(())
    }

    /// Items in id order.
    pub fn items(&self) -> impl Iterator<Item = &SceneItem> {
        self.items.values()
    }

    pub fn get(&self, id: &str) -> Option<&SceneItem> {
        self.items.get(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn held(&self) -> Option<&str> {
        self.items.values().find(|i| i.held).map(|i| i.id.as_str())
    }

    /// Grabs the nearest free item within the grasp tolerance of `tcp`.
    /// Ties go to the lexicographically smallest id. Keeps an item that is
    /// already held.
    pub fn grasp(&mut self, tcp: &Pose) -> Option<String> {
        if let Some(id) = self.held() {
            return Some(id.to_string());
        }
        let mut best: Option<(&str, f64)> = None;
        for item in self.items.values() {
            let d = item.pose.position.distance(tcp.position);
            if d <= self.grasp_tolerance && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((item.id.as_str(), d));
            }
        }
        let id = best?.0.to_string();
        let item = self.items.get_mut(&id).expect("id taken from map");
        item.held = true;
        item.pose = *tcp;
        Some(id)
    }

    /// Drops the held item at `tcp`, returning its id.
    pub fn release(&mut self, tcp: &Pose) -> Option<String> {
        let item = self.items.values_mut().find(|i| i.held)?;
        item.held = false;
        item.pose = *tcp;
        Some(item.id.clone())
    }

    /// Moves the held item along with the tool.
    pub fn track_tool(&mut self, tcp: &Pose) {
        if let Some(item) = self.items.values_mut().find(|i| i.held) {
            item.pose = *tcp;
        }
    }
}

/// Scene snapshot document: joints, TCP, gripper flag and every item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub joints: JointVector,
    pub tcp: Pose,
    pub gripper_open: bool,
    pub items: Vec<SnapshotItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotItem {
    pub id: String,
    pub position: cellctl_core::Vec3,
    pub orientation: cellctl_core::UnitQuaternion,
    pub held: bool,
}

impl SceneSnapshot {
    pub fn capture(joints: JointVector, tcp: Pose, gripper_open: bool, scene: &Scene) -> Self {
        SceneSnapshot {
            joints,
            tcp,
            gripper_open,
            items: scene
                .items()
                .map(|i| SnapshotItem {
                    id: i.id.clone(),
                    position: i.pose.position,
                    orientation: i.pose.orientation,
                    held: i.held,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}
