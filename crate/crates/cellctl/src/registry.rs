//! Maps (manufacturer, interface type) pairs to backend factories and
//! builds robots from descriptors.

use std::collections::BTreeMap;
use std::sync::Arc;

use cellctl_core::Backend;
use thiserror::Error;

use crate::backends::{LoopbackArm, SimulatedArm, SimulatedConfig, WireBackend};
use crate::config::{InterfaceBinding, RobotSystemDescriptor, ValidationReport};
use crate::robot::Robot;

/// Builds a backend for a validated descriptor and its active binding.
pub type BackendFactory =
    Arc<dyn Fn(&RobotSystemDescriptor, &InterfaceBinding) -> Result<Box<dyn Backend>, String> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("backend ({manufacturer}, {interface_type}) is already registered")]
pub struct DuplicateBackend {
    pub manufacturer: String,
    pub interface_type: String,
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("invalid descriptor:\n{0}")]
    Invalid(ValidationReport),
    #[error(
        "no backend registered for manufacturer {manufacturer:?} with interface type {interface_type:?}"
    )]
    UnknownBackend {
        manufacturer: String,
        interface_type: String,
    },
    #[error("{interface_type} backend setup failed: {message}")]
    Backend { interface_type: String, message: String },
}

#[derive(Clone, Default)]
pub struct ManufacturerRegistry {
    factories: BTreeMap<(String, String), BackendFactory>,
}

impl ManufacturerRegistry {
    pub fn new() -> Self {
        ManufacturerRegistry::default()
    }

    /// The `generic` manufacturer with `simulated`, `loopback` and `wire`.
    pub fn with_defaults() -> Self {
        let mut r = ManufacturerRegistry::new();
        r.register("generic", "simulated", Arc::new(simulated_factory))
            .expect("empty registry");
        r.register("generic", "loopback", Arc::new(loopback_factory))
            .expect("empty registry");
        r.register("generic", "wire", Arc::new(wire_factory))
            .expect("empty registry");
        r
    }

    pub fn register(
        &mut self,
        manufacturer: &str,
        interface_type: &str,
        factory: BackendFactory,
    ) -> Result<(), DuplicateBackend> {
        let key = (manufacturer.to_string(), interface_type.to_string());
        if self.factories.contains_key(&key) {
            return Err(DuplicateBackend {
                manufacturer: key.0,
                interface_type: key.1,
            });
        }
        self.factories.insert(key, factory);
        Ok(())
    }

    pub fn get(&self, manufacturer: &str, interface_type: &str) -> Option<&BackendFactory> {
        self.factories
            .get(&(manufacturer.to_string(), interface_type.to_string()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.factories.keys().map(|(m, i)| (m.as_str(), i.as_str()))
    }
}

fn param<T: std::str::FromStr>(binding: &InterfaceBinding, key: &str, default: T) -> Result<T, String> {
    match binding.params.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| format!("param {key}: cannot parse {v:?}")),
    }
}

fn simulated_factory(d: &RobotSystemDescriptor, b: &InterfaceBinding) -> Result<Box<dyn Backend>, String> {
    let time_scale: f64 = param(b, "time_scale", 0.0)?;
    if !(time_scale >= 0.0 && time_scale.is_finite()) {
        return Err(format!("param time_scale must be non-negative, got {time_scale}"));
    }
    let config = SimulatedConfig {
        time_scale,
        linear_waypoints: d.motion.linear_waypoints as usize,
        ik: d.ik_options(),
        grasp_tolerance: d.grasp_tolerance(),
    };
    let model = d.kinematic_model()?;
    let home = d.home().ok_or("robot.home must have 6 values")?;
    let mut arm = SimulatedArm::new(model, home, config).map_err(|e| e.to_string())?;
    for item in d.scene.iter().flat_map(|s| &s.items) {
        arm.spawn_item(&item.id, item.pose).map_err(|e| e.to_string())?;
    }
    Ok(Box::new(arm))
}

fn loopback_factory(d: &RobotSystemDescriptor, _: &InterfaceBinding) -> Result<Box<dyn Backend>, String> {
    let home = d.home().ok_or("robot.home must have 6 values")?;
    Ok(Box::new(LoopbackArm::new(d.kinematic_model()?, home)))
}

fn wire_factory(_: &RobotSystemDescriptor, b: &InterfaceBinding) -> Result<Box<dyn Backend>, String> {
    let endpoint = b
        .params
        .get("endpoint")
        .ok_or("param endpoint (host:port) is required")?;
    let timeout_ms: u64 = param(b, "timeout_ms", 10_000)?;
    Ok(Box::new(
        WireBackend::new(endpoint.clone()).with_timeout(std::time::Duration::from_millis(timeout_ms)),
    ))
}

/// Validates `descriptor` and instantiates its single active interface.
pub fn create_robot(
    descriptor: &RobotSystemDescriptor,
    registry: &ManufacturerRegistry,
) -> Result<Robot, SetupError> {
    let report = descriptor.validate();
    if !report.is_ok() {
        return Err(SetupError::Invalid(report));
    }
    let binding = descriptor
        .active_interface()
        .expect("validated: exactly one active interface");
    let manufacturer = &descriptor.robot.manufacturer;
    let factory = registry
        .get(manufacturer, &binding.interface_type)
        .ok_or_else(|| SetupError::UnknownBackend {
            manufacturer: manufacturer.clone(),
            interface_type: binding.interface_type.clone(),
        })?;
    let backend = factory(descriptor, binding).map_err(|message| SetupError::Backend {
        interface_type: binding.interface_type.clone(),
        message,
    })?;
    let model = descriptor.kinematic_model().expect("validated model");
    let home = descriptor.home().expect("validated home");
    Ok(Robot::new(model, home, backend))
}
