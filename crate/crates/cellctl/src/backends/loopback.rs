//! Recording backend: accepts every command instantly and keeps only the
//! commanded state. Used to compare the command streams applications emit.

use std::any::Any;

use cellctl_core::{
    forward_kinematics, Backend, Command, ControlError, GripperState, JointVector, KinematicModel,
    MotionContext, MotionResult, Pose,
};

use crate::robot::CommandLog;

pub struct LoopbackArm {
    model: KinematicModel,
    home: JointVector,
    joints: JointVector,
    // Set by MoveLinear, which does not solve for joints.
    commanded_pose: Option<Pose>,
    gripper_open: bool,
    connected: bool,
    log: CommandLog,
}

impl LoopbackArm {
    pub fn new(model: KinematicModel, home: JointVector) -> Self {
        LoopbackArm {
            model,
            home,
            joints: home,
            commanded_pose: None,
            gripper_open: true,
            connected: false,
            log: CommandLog::new(),
        }
    }

    /// Every command this backend received, in order.
    pub fn commands(&self) -> CommandLog {
        self.log.clone()
    }

    fn pose(&self) -> Pose {
        self.commanded_pose
            .unwrap_or_else(|| forward_kinematics(&self.model, &self.joints))
    }

    fn result(&self) -> MotionResult {
        MotionResult {
            final_joints: self.joints,
            final_pose: self.pose(),
            duration: 0.0,
        }
    }
}

impl Backend for LoopbackArm {
    fn kind(&self) -> &'static str {
        "loopback"
    }

    fn connect(&mut self) -> Result<(), ControlError> {
        self.connected = true;
        Ok(())
    }

    fn disconnect(&mut self) {
        self.connected = false;
    }

    fn joint_state(&mut self) -> Result<JointVector, ControlError> {
        Ok(self.joints)
    }

    fn tcp_pose(&mut self) -> Result<Pose, ControlError> {
        Ok(self.pose())
    }

    fn gripper_state(&mut self) -> Result<GripperState, ControlError> {
        Ok(GripperState {
            open: self.gripper_open,
            holding: None,
        })
    }

    fn execute_motion(
        &mut self,
        command: &Command,
        _ctx: &mut MotionContext<'_>,
    ) -> Result<MotionResult, ControlError> {
        self.log.push(command.clone());
        match command {
            Command::MoveJoints { target, .. } => {
                self.joints = *target;
                self.commanded_pose = None;
            }
            Command::Home => {
                self.joints = self.home;
                self.commanded_pose = None;
            }
            Command::MoveLinear { target, .. } => self.commanded_pose = Some(*target),
            Command::SetGripper { .. } | Command::Stop => {}
        }
        Ok(self.result())
    }

    fn set_gripper(&mut self, open: bool) -> Result<GripperState, ControlError> {
        self.log.push(Command::SetGripper { open });
        self.gripper_open = open;
        self.gripper_state()
    }

    fn stop(&mut self) -> Result<(), ControlError> {
        self.log.push(Command::Stop);
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
