//! Cell applications. They see the robot only through the capability
//! contract and the skill layer.

pub mod binpick;
