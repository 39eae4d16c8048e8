//! Kinematic arm simulator with a proximity-grasp scene.

use std::any::Any;
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Duration;

use cellctl_core::{
    forward_kinematics, interpolate_cartesian, interpolate_joint, inverse_kinematics, Backend, Command,
    ControlError, ErrorCode, GripperState, IkError, IkOptions, JointVector, KinematicModel, MotionContext,
    MotionResult, Pose,
};

use super::scene::{Scene, SceneError, SceneSnapshot};

/// Wall-clock step while simulating a timed motion.
const TICK: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedConfig {
    /// Wall-clock seconds per nominal second; 0 executes instantly.
    pub time_scale: f64,
    /// Waypoints per `MoveLinear`, excluding the start.
    pub linear_waypoints: usize,
    pub ik: IkOptions,
    pub grasp_tolerance: f64,
}

impl Default for SimulatedConfig {
    fn default() -> Self {
        SimulatedConfig {
            time_scale: 0.0,
            linear_waypoints: 50,
            ik: IkOptions::default(),
            grasp_tolerance: super::scene::DEFAULT_GRASP_TOLERANCE,
        }
    }
}

/// Read handle on the latest published scene snapshot. Usable while a
/// motion holds the backend.
#[derive(Clone)]
pub struct SnapshotReader(Arc<RwLock<SceneSnapshot>>);

impl SnapshotReader {
    pub fn get(&self) -> SceneSnapshot {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Joint waypoints of a straight-line tool motion: evenly spaced Cartesian
/// waypoints, each solved by IK seeded with the previous solution. Yields
/// `REACHABILITY` at the first waypoint without a solution, then stops.
pub struct LinearPlanner<'a> {
    model: &'a KinematicModel,
    start: Pose,
    target: Pose,
    joints: JointVector,
    waypoints: usize,
    next: usize,
    ik: IkOptions,
}

impl<'a> LinearPlanner<'a> {
    pub fn new(
        model: &'a KinematicModel,
        from: JointVector,
        target: Pose,
        waypoints: usize,
        ik: IkOptions,
    ) -> Self {
        LinearPlanner {
            model,
            start: forward_kinematics(model, &from),
            target,
            joints: from,
            waypoints: waypoints.max(1),
            next: 1,
            ik,
        }
    }
}

impl Iterator for LinearPlanner<'_> {
    type Item = Result<JointVector, ControlError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (k, n) = (self.next, self.waypoints);
        if k > n {
            return None;
        }
        self.next += 1;
        let waypoint = match interpolate_cartesian(&self.start, &self.target, k as f64 / n as f64) {
            Ok(w) => w,
            Err(e) => return Some(Err(e.into())),
        };
        match inverse_kinematics(self.model, &waypoint, &self.joints, &self.ik) {
            Ok(r) => {
                self.joints = r.joints;
                Some(Ok(r.joints))
            }
            Err(IkError::NotConverged { best }) => {
                self.next = n + 1;
                Some(Err(ControlError::new(
                    ErrorCode::Reachability,
                    format!(
                        "no IK solution for waypoint {k}/{n} (position residual {:.3e} m, orientation residual {:.3e} rad)",
                        best.position_residual, best.orientation_residual
                    ),
                )))
            }
            Err(e @ IkError::InvalidOptions(_)) => {
                self.next = n + 1;
                Some(Err(ControlError::internal(e.to_string())))
            }
        }
    }
}

pub struct SimulatedArm {
    model: KinematicModel,
    home: JointVector,
    joints: JointVector,
    gripper_open: bool,
    scene: Scene,
    connected: bool,
    config: SimulatedConfig,
    published: Arc<RwLock<SceneSnapshot>>,
    last_path: Vec<JointVector>,
}

impl SimulatedArm {
    /// Starts at `home` with the gripper open and an empty scene.
    pub fn new(
        model: KinematicModel,
        home: JointVector,
        config: SimulatedConfig,
    ) -> Result<Self, SceneError> {
        let scene = Scene::new(config.grasp_tolerance)?;
        let tcp = forward_kinematics(&model, &home);
        let published = Arc::new(RwLock::new(SceneSnapshot::capture(home, tcp, true, &scene)));
        Ok(SimulatedArm {
            model,
            home,
            joints: home,
            gripper_open: true,
            scene,
            connected: false,
            config,
            published,
            last_path: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimulatedConfig {
        &self.config
    }

    pub fn set_time_scale(&mut self, time_scale: f64) {
        self.config.time_scale = time_scale.max(0.0);
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn spawn_item(&mut self, id: &str, pose: Pose) -> Result<(), SceneError> {
        self.scene.spawn(id, pose)?;
        self.publish();
        Ok(())
    }

    /// Removes every item.
    pub fn clear_scene(&mut self) {
        self.scene = Scene::new(self.config.grasp_tolerance).expect("tolerance validated at construction");
        self.publish();
    }

    pub fn holding(&self) -> Option<&str> {
        self.scene.held()
    }

    pub fn joints(&self) -> JointVector {
        self.joints
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot::capture(self.joints, self.tcp(), self.gripper_open, &self.scene)
    }

    pub fn snapshot_reader(&self) -> SnapshotReader {
        SnapshotReader(self.published.clone())
    }

    /// Joint states visited by the most recent motion, start included.
    pub fn last_path(&self) -> &[JointVector] {
        &self.last_path
    }

    fn tcp(&self) -> Pose {
        forward_kinematics(&self.model, &self.joints)
    }

    fn publish(&self) {
        let snap = self.snapshot();
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = snap;
    }

    fn step_to(&mut self, q: JointVector, ctx: &mut MotionContext<'_>) {
        debug_assert!(self.model.within_limits(&q));
        self.joints = q;
        let tcp = self.tcp();
        self.scene.track_tool(&tcp);
        self.last_path.push(q);
        self.publish();
        ctx.report(&q);
    }

    /// Sleeps `nominal` scaled seconds in ticks; false if aborted.
    fn wait(&self, nominal: f64, ctx: &MotionContext<'_>) -> bool {
        if ctx.abort_requested() {
            return false;
        }
        let total = nominal * self.config.time_scale;
        if total > 0.0 {
            thread::sleep(Duration::from_secs_f64(total));
        }
        !ctx.abort_requested()
    }

    fn result(&self, duration: f64) -> MotionResult {
        MotionResult {
            final_joints: self.joints,
            final_pose: self.tcp(),
            duration,
        }
    }

    fn move_joints(&mut self, target: JointVector, speed: f64, ctx: &mut MotionContext<'_>) -> MotionResult {
        let start = self.joints;
        let duration = self.model.joint_move_duration(&start, &target, speed);
        let ticks = if self.config.time_scale > 0.0 {
            ((duration * self.config.time_scale) / TICK.as_secs_f64())
                .ceil()
                .max(1.0) as usize
        } else {
            1
        };
        for k in 1..=ticks {
            if !self.wait(duration / ticks as f64, ctx) {
                return self.result(duration * (k - 1) as f64 / ticks as f64);
            }
            let s = k as f64 / ticks as f64;
            let q = interpolate_joint(&start, &target, s).expect("s in [0, 1]");
            self.step_to(q, ctx);
        }
        self.result(duration)
    }

    fn move_linear(
        &mut self,
        target: Pose,
        speed: f64,
        ctx: &mut MotionContext<'_>,
    ) -> Result<MotionResult, ControlError> {
        let model = self.model.clone();
        let mut planner = LinearPlanner::new(
            &model,
            self.joints,
            target,
            self.config.linear_waypoints,
            self.config.ik,
        );
        let mut elapsed = 0.0;
        while let Some(step) = planner.next() {
            let q = step?;
            let segment = self.model.joint_move_duration(&self.joints, &q, speed);
            if !self.wait(segment, ctx) {
                return Ok(self.result(elapsed));
            }
            elapsed += segment;
            self.step_to(q, ctx);
        }
        Ok(self.result(elapsed))
    }

    fn ensure_connected(&self) -> Result<(), ControlError> {
        if self.connected {
            Ok(())
        } else {
            Err(ControlError::not_connected())
        }
    }
}

impl Backend for SimulatedArm {
    fn kind(&self) -> &'static str {
        "simulated"
    }

    fn connect(&mut self) -> Result<(), ControlError> {
        self.connected = true;
        Ok(())
    }

    fn disconnect(&mut self) {
        self.connected = false;
    }

    fn joint_state(&mut self) -> Result<JointVector, ControlError> {
        self.ensure_connected()?;
        Ok(self.joints)
    }

    fn tcp_pose(&mut self) -> Result<Pose, ControlError> {
        self.ensure_connected()?;
        Ok(self.tcp())
    }

    fn gripper_state(&mut self) -> Result<GripperState, ControlError> {
        self.ensure_connected()?;
        Ok(GripperState {
            open: self.gripper_open,
            holding: self.scene.held().map(str::to_string),
        })
    }

    fn execute_motion(
        &mut self,
        command: &Command,
        ctx: &mut MotionContext<'_>,
    ) -> Result<MotionResult, ControlError> {
        self.ensure_connected()?;
        self.last_path.clear();
        self.last_path.push(self.joints);
        match command {
            Command::MoveJoints {
                target,
                speed_fraction,
            } => {
                if let Some(j) = self.model.first_limit_violation(target) {
                    return Err(ControlError::new(
                        ErrorCode::LimitViolation,
                        format!("joint {} target outside limits", j + 1),
                    ));
                }
                Ok(self.move_joints(*target, *speed_fraction, ctx))
            }
            Command::Home => Ok(self.move_joints(self.home, 1.0, ctx)),
            Command::MoveLinear {
                target,
                speed_fraction,
            } => self.move_linear(*target, *speed_fraction, ctx),
            other => Err(ControlError::internal(format!(
                "{} is not a motion command",
                other.name()
            ))),
        }
    }

    fn set_gripper(&mut self, open: bool) -> Result<GripperState, ControlError> {
        self.ensure_connected()?;
        let tcp = self.tcp();
        if open {
            self.scene.release(&tcp);
        } else {
            self.scene.grasp(&tcp);
        }
        self.gripper_open = open;
        self.publish();
        self.gripper_state()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::test_support::{generic_model, HOME};
    use std::sync::atomic::AtomicBool;

    fn arm() -> SimulatedArm {
        let mut a = SimulatedArm::new(generic_model(), HOME, SimulatedConfig::default()).unwrap();
        a.connect().unwrap();
        a
    }

    fn run(a: &mut SimulatedArm, cmd: Command) -> Result<MotionResult, ControlError> {
        let abort = AtomicBool::new(false);
        let mut sink = |_: &JointVector| {};
        let mut ctx = MotionContext::new(&abort, &mut sink);
        a.execute_motion(&cmd, &mut ctx)
    }

    #[test]
    fn home_to_home_takes_no_time() {
        let mut a = arm();
        let r = run(
            &mut a,
            Command::MoveJoints {
                target: HOME,
                speed_fraction: 1.0,
            },
        )
        .unwrap();
        assert_eq!(r.duration, 0.0);
        assert_eq!(r.final_joints, HOME);
    }

    #[test]
    fn half_speed_doubles_duration() {
        let target = JointVector([0.3, 0.2, 0.5, -0.4, 0.9, 1.0]);
        let mut a = arm();
        let full = run(
            &mut a,
            Command::MoveJoints {
                target,
                speed_fraction: 1.0,
            },
        )
        .unwrap()
        .duration;
        let mut b = arm();
        let half = run(
            &mut b,
            Command::MoveJoints {
                target,
                speed_fraction: 0.5,
            },
        )
        .unwrap()
        .duration;
        assert!(full > 0.0);
        assert_eq!(half, 2.0 * full);
        assert_eq!(a.joints(), target);
    }

    #[test]
    fn linear_path_stays_on_segment() {
        let model = generic_model();
        let q0 = JointVector([0.1, 0.3, 0.4, 0.1, 0.8, 0.2]);
        let q1 = JointVector([0.25, 0.4, 0.3, 0.0, 0.85, 0.1]);
        let p0 = forward_kinematics(&model, &q0);
        let p1 = forward_kinematics(&model, &q1);
        let mut a = arm();
        run(
            &mut a,
            Command::MoveJoints {
                target: q0,
                speed_fraction: 1.0,
            },
        )
        .unwrap();
        let r = run(
            &mut a,
            Command::MoveLinear {
                target: p1,
                speed_fraction: 1.0,
            },
        )
        .unwrap();
        assert!(r.final_pose.position.distance(p1.position) <= 1e-4);
        let dir = p1.position - p0.position;
        let len = dir.norm();
        assert_eq!(a.last_path().len(), 51);
        for q in a.last_path() {
            let p = forward_kinematics(&model, q).position - p0.position;
            let along = p.dot(dir) / len;
            let off = (p - dir.scale(along / len)).norm();
            assert!(off <= 1e-3, "off segment by {off}");
            assert!(along >= -1e-3 && along <= len + 1e-3);
            assert!(model.within_limits(q));
        }
    }

    #[test]
    fn unreachable_linear_target_is_reported() {
        let mut a = arm();
        let far = Pose::from_position(cellctl_core::Vec3::new(100.0, 0.0, 0.0));
        let err = run(
            &mut a,
            Command::MoveLinear {
                target: far,
                speed_fraction: 1.0,
            },
        )
        .unwrap_err();
        assert_eq!(err.code, ErrorCode::Reachability);
        assert!(a.model.within_limits(&a.joints()));
    }

    #[test]
    fn grasp_carry_release() {
        let mut a = arm();
        let tcp = a.tcp_pose().unwrap();
        a.spawn_item("part", tcp).unwrap();
        assert!(a.spawn_item("part", tcp).is_err());
        let g = a.set_gripper(false).unwrap();
        assert_eq!(g.holding.as_deref(), Some("part"));
        let target = JointVector([0.4, 0.2, 0.5, 0.0, 0.8, 0.0]);
        run(
            &mut a,
            Command::MoveJoints {
                target,
                speed_fraction: 1.0,
            },
        )
        .unwrap();
        let moved = a.tcp_pose().unwrap();
        assert_eq!(a.scene().get("part").unwrap().pose, moved);
        let g = a.set_gripper(true).unwrap();
        assert_eq!(g.holding, None);
        assert_eq!(a.holding(), None);
        assert_eq!(a.scene().get("part").unwrap().pose, moved);
    }

    #[test]
    fn timed_motion_halts_on_abort() {
        let mut a = arm();
        a.set_time_scale(1.0);
        let abort = AtomicBool::new(true);
        let mut sink = |_: &JointVector| {};
        let mut ctx = MotionContext::new(&abort, &mut sink);
        let target = JointVector([1.0, 0.2, 0.5, 0.0, 0.8, 0.0]);
        let r = a
            .execute_motion(
                &Command::MoveJoints {
                    target,
                    speed_fraction: 0.1,
                },
                &mut ctx,
            )
            .unwrap();
        assert_eq!(r.final_joints, HOME);
    }

    #[test]
    fn snapshot_reader_sees_updates() {
        let mut a = arm();
        let reader = a.snapshot_reader();
        a.spawn_item("x", Pose::default()).unwrap();
        assert_eq!(reader.get().items.len(), 1);
        assert_eq!(reader.get(), a.snapshot());
    }

    #[test]
    fn reads_require_connection() {
        let mut a = SimulatedArm::new(generic_model(), HOME, SimulatedConfig::default()).unwrap();
        assert_eq!(a.joint_state().unwrap_err().code, ErrorCode::NotConnected);
    }
}
