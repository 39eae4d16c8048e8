//! Interface implementations underneath the capability contract.

pub mod loopback;
pub mod scene;
pub mod simulated;
pub mod wire;

pub use loopback::LoopbackArm;
pub use scene::{Scene, SceneItem, SceneSnapshot};
pub use simulated::{LinearPlanner, SimulatedArm, SimulatedConfig, SnapshotReader};
pub use wire::WireBackend;
