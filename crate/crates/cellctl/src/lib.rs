//! Robot cell control on top of `cellctl-core`: interface backends, the
//! thread-safe robot handle, skills, system descriptors and the network
//! control gateway.

pub use cellctl_core as core;

pub mod apps;
pub mod backends;
pub mod config;
pub mod demo;
pub mod gateway;
pub mod protocol;
pub mod registry;
pub mod robot;
pub mod skills;

pub use robot::{CommandLog, Robot, StateEvent, Subscription, Telemetry};

#[cfg(test)]
pub(crate) mod test_support {
    use cellctl_core::{DhRow, JointVector, KinematicModel};
    use std::f64::consts::FRAC_PI_2;

    pub const DEFAULT_CELL: &str = include_str!("../examples/default-cell.json");

    pub fn default_cell() -> crate::config::RobotSystemDescriptor {
        crate::config::parse_descriptor(DEFAULT_CELL).unwrap()
    }

    /// Connected robot for the default cell with `interface_type` active.
    pub fn robot(interface_type: &str) -> std::sync::Arc<crate::Robot> {
        use cellctl_core::RobotControl;
        let mut d = default_cell();
        assert!(d.activate(interface_type));
        let r = crate::registry::create_robot(&d, &crate::registry::ManufacturerRegistry::with_defaults())
            .unwrap();
        r.connect().unwrap();
        std::sync::Arc::new(r)
    }

    pub const HOME: JointVector = JointVector([0.0, 0.116, 0.334, 0.0, 1.12, 0.0]);

    pub fn generic_model() -> KinematicModel {
        KinematicModel::new(
            [
                DhRow::new(0.0, 0.33, 0.0, -FRAC_PI_2),
                DhRow::new(-FRAC_PI_2, 0.0, 0.26, 0.0),
                DhRow::new(0.0, 0.0, 0.02, -FRAC_PI_2),
                DhRow::new(0.0, 0.29, 0.0, FRAC_PI_2),
                DhRow::new(0.0, 0.0, 0.0, -FRAC_PI_2),
                DhRow::new(0.0, 0.08, 0.0, 0.0),
            ],
            [-2.9, -1.9, -1.2, -3.3, -2.0, -6.2],
            [2.9, 1.5, 2.8, 3.3, 2.0, 6.2],
            [3.0, 3.0, 3.0, 4.5, 4.5, 6.0],
        )
        .unwrap()
    }
}
