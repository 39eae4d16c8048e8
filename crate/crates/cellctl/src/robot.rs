//! The robot handle: one backend behind the capability contract.
//!
//! [`Robot`] owns the status machine, validates commands identically for
//! every backend, serializes access to the backend, and fans state changes
//! out to monitoring subscribers. Motion runs on the caller's thread while
//! `status()`, `telemetry()` and `Stop` stay available from others.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, Weak};
use std::time::Duration;

use cellctl_core::control::is_legal_transition;
use cellctl_core::{
    forward_kinematics, Backend, Command, ControlError, ErrorCode, GripperState, JointVector, KinematicModel,
    MotionContext, MotionResult, Outcome, Pose, RobotControl, RobotStatus,
};

/// Snapshot of everything a monitor needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub status: RobotStatus,
    pub joints: JointVector,
    pub tcp: Pose,
    pub gripper_open: bool,
    pub holding: Option<String>,
}

/// Commands in the order they were issued, numbered from 0.
#[derive(Debug, Clone, Default)]
pub struct CommandLog(Arc<Mutex<Vec<(u64, Command)>>>);

impl CommandLog {
    pub fn new() -> Self {
        CommandLog::default()
    }

    pub fn push(&self, command: Command) {
        let mut entries = lock(&self.0);
        let seq = entries.len() as u64;
        entries.push((seq, command));
    }

    pub fn entries(&self) -> Vec<(u64, Command)> {
        lock(&self.0).clone()
    }

    pub fn commands(&self) -> Vec<Command> {
        lock(&self.0).iter().map(|(_, c)| c.clone()).collect()
    }

    pub fn len(&self) -> usize {
        lock(&self.0).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        lock(&self.0).clear();
    }
}

/// A state event as queued for one subscriber.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEvent {
    pub seq: u64,
    pub telemetry: Telemetry,
}

struct QueueState {
    items: VecDeque<StateEvent>,
    next_seq: u64,
    closed: bool,
}

struct SubscriberQueue {
    state: Mutex<QueueState>,
    ready: Condvar,
    capacity: usize,
}

impl SubscriberQueue {
    fn push(&self, telemetry: Telemetry) {
        let mut st = lock(&self.state);
        if st.closed {
            return;
        }
        let seq = st.next_seq;
        st.next_seq += 1;
        st.items.push_back(StateEvent { seq, telemetry });
        // Slow consumer: drop the oldest, leaving a gap in seq.
        while st.items.len() > self.capacity {
            st.items.pop_front();
        }
        self.ready.notify_all();
    }
}

/// Receiving end of the state event stream. Dropping every clone or calling
/// [`Subscription::close`] stops delivery.
#[derive(Clone)]
pub struct Subscription {
    queue: Arc<SubscriberQueue>,
}

impl Subscription {
    /// Waits up to `timeout` for events. Returns `None` once closed.
    pub fn wait(&self, timeout: Duration) -> Option<Vec<StateEvent>> {
        let mut st = lock(&self.queue.state);
        if st.items.is_empty() && !st.closed {
            st = self
                .queue
                .ready
                .wait_timeout(st, timeout)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        if st.closed {
            return None;
        }
        Some(st.items.drain(..).collect())
    }

    /// Queues an event outside the regular change notifications (periodic
    /// monitoring during motion).
    pub fn inject(&self, telemetry: Telemetry) {
        self.queue.push(telemetry);
    }

    pub fn close(&self) {
        let mut st = lock(&self.queue.state);
        st.closed = true;
        st.items.clear();
        self.queue.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        lock(&self.queue.state).closed
    }
}

#[derive(Default)]
struct StateBus {
    subscribers: Mutex<Vec<Weak<SubscriberQueue>>>,
}

impl StateBus {
    fn subscribe(&self, capacity: usize) -> Subscription {
        let queue = Arc::new(SubscriberQueue {
            state: Mutex::new(QueueState {
                items: VecDeque::new(),
                next_seq: 0,
                closed: false,
            }),
            ready: Condvar::new(),
            capacity: capacity.max(1),
        });
        lock(&self.subscribers).push(Arc::downgrade(&queue));
        Subscription { queue }
    }

    fn publish(&self, telemetry: &Telemetry) {
        let mut subs = lock(&self.subscribers);
        subs.retain(|w| w.upgrade().is_some_and(|q| !lock(&q.state).closed));
        for q in subs.iter().filter_map(Weak::upgrade) {
            q.push(telemetry.clone());
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Default number of queued events per subscriber before the oldest is dropped.
pub const SUBSCRIBER_QUEUE_CAPACITY: usize = 256;

/// Thread-safe robot handle. Share it behind an `Arc`.
pub struct Robot {
    model: KinematicModel,
    home: JointVector,
    interface_type: &'static str,
    // Lock order: backend before status/telemetry. Never take the backend
    // while holding status.
    backend: Mutex<Box<dyn Backend>>,
    status: Mutex<RobotStatus>,
    telemetry: Mutex<Telemetry>,
    abort: AtomicBool,
    bus: StateBus,
    tap: Mutex<Option<CommandLog>>,
}

impl Robot {
    pub fn new(model: KinematicModel, home: JointVector, backend: Box<dyn Backend>) -> Self {
        let interface_type = backend.kind();
        let tcp = forward_kinematics(&model, &home);
        Robot {
            telemetry: Mutex::new(Telemetry {
                status: RobotStatus::Disconnected,
                joints: home,
                tcp,
                gripper_open: true,
                holding: None,
            }),
            model,
            home,
            interface_type,
            backend: Mutex::new(backend),
            status: Mutex::new(RobotStatus::Disconnected),
            abort: AtomicBool::new(false),
            bus: StateBus::default(),
            tap: Mutex::new(None),
        }
    }

    pub fn model(&self) -> &KinematicModel {
        &self.model
    }

    pub fn home(&self) -> JointVector {
        self.home
    }

    /// Interface type of the backend, e.g. `"simulated"`.
    pub fn interface_type(&self) -> &'static str {
        self.interface_type
    }

    /// Records every command subsequently passed to [`RobotControl::execute`].
    pub fn record_commands(&self) -> CommandLog {
        let log = CommandLog::new();
        *lock(&self.tap) = Some(log.clone());
        log
    }

    /// Latest telemetry; never blocks on a running motion.
    pub fn telemetry(&self) -> Telemetry {
        let mut t = lock(&self.telemetry).clone();
        t.status = *lock(&self.status);
        t
    }

    pub fn subscribe(&self) -> Subscription {
        self.bus.subscribe(SUBSCRIBER_QUEUE_CAPACITY)
    }

    /// Latches `EStopped` from any connected state and halts motion.
    pub fn emergency_stop(&self) -> Result<RobotStatus, ControlError> {
        {
            let mut st = lock(&self.status);
            if !st.is_connected() {
                return Err(ControlError::not_connected());
            }
            self.abort.store(true, Ordering::SeqCst);
            *st = RobotStatus::EStopped;
        }
        self.publish();
        Ok(RobotStatus::EStopped)
    }

    /// Clears a latched `EStopped` or `Error` status back to `Idle`.
    pub fn reset(&self) -> Result<RobotStatus, ControlError> {
        {
            let mut st = lock(&self.status);
            match *st {
                RobotStatus::EStopped | RobotStatus::Error(_) => *st = RobotStatus::Idle,
                RobotStatus::Disconnected => return Err(ControlError::not_connected()),
                other => {
                    return Err(ControlError::invalid_params(format!(
                        "nothing to reset in state {other}"
                    )))
                }
            }
        }
        self.publish();
        Ok(RobotStatus::Idle)
    }

    /// Runs `f` against the backend when it is of type `T`. Blocks while a
    /// motion is in progress.
    pub fn with_backend<T: Backend, R>(&self, f: impl FnOnce(&mut T) -> R) -> Option<R> {
        let mut b = lock(&self.backend);
        b.as_any_mut().downcast_mut::<T>().map(f)
    }

    fn set_status(&self, to: RobotStatus) {
        {
            let mut st = lock(&self.status);
            debug_assert!(is_legal_transition(*st, to), "{} -> {}", *st, to);
            *st = to;
        }
        self.publish();
    }

    fn publish(&self) {
        self.bus.publish(&self.telemetry());
    }

    fn update_joints(telemetry: &Mutex<Telemetry>, model: &KinematicModel, joints: &JointVector) {
        let tcp = forward_kinematics(model, joints);
        let mut t = lock(telemetry);
        t.joints = *joints;
        t.tcp = tcp;
    }

    fn update_gripper(&self, g: &GripperState) {
        let mut t = lock(&self.telemetry);
        t.gripper_open = g.open;
        t.holding = g.holding.clone();
    }

    fn refresh_from_backend(&self, backend: &mut dyn Backend) {
        if let Ok(q) = backend.joint_state() {
            Self::update_joints(&self.telemetry, &self.model, &q);
        }
        if let Ok(g) = backend.gripper_state() {
            self.update_gripper(&g);
        }
    }

    /// Common gate for commands that need an idle, connected robot.
    fn require_idle(st: RobotStatus) -> Result<(), ControlError> {
        match st {
            RobotStatus::Disconnected => Err(ControlError::not_connected()),
            RobotStatus::EStopped => Err(ControlError::new(
                ErrorCode::Estopped,
                "emergency stop is latched",
            )),
            RobotStatus::Error(code) => Err(ControlError::new(
                code,
                "robot is in an error state; reset required",
            )),
            RobotStatus::Moving => Err(ControlError::new(
                ErrorCode::Busy,
                "a motion is already in progress",
            )),
            RobotStatus::Idle => Ok(()),
        }
    }

    fn run_motion(&self, command: &Command) -> Result<Outcome, ControlError> {
        {
            let mut st = lock(&self.status);
            Self::require_idle(*st)?;
            if let Command::MoveJoints { target, .. } = command {
                if let Some(j) = self.model.first_limit_violation(target) {
                    return Err(ControlError::new(
                        ErrorCode::LimitViolation,
                        format!(
                            "joint {} target {} outside [{}, {}]",
                            j + 1,
                            target[j],
                            self.model.joint_min()[j],
                            self.model.joint_max()[j]
                        ),
                    ));
                }
            }
            *st = RobotStatus::Moving;
            self.abort.store(false, Ordering::SeqCst);
        }
        self.publish();

        let mut backend = lock(&self.backend);
        let telemetry = &self.telemetry;
        let model = &self.model;
        let mut progress = |q: &JointVector| Self::update_joints(telemetry, model, q);
        let mut ctx = MotionContext::new(&self.abort, &mut progress);
        let result = backend.execute_motion(command, &mut ctx);
        self.refresh_from_backend(backend.as_mut());

        let next = match &result {
            Err(e) if e.code == ErrorCode::Internal => RobotStatus::Error(ErrorCode::Internal),
            _ => RobotStatus::Idle,
        };
        let (changed, estopped) = {
            let mut st = lock(&self.status);
            if *st == RobotStatus::Moving {
                *st = next;
                (true, false)
            } else {
                (false, *st == RobotStatus::EStopped)
            }
        };
        drop(backend);
        if changed {
            self.publish();
        }
        if estopped && result.is_ok() {
            return Err(ControlError::new(
                ErrorCode::Estopped,
                "motion halted by emergency stop",
            ));
        }
        result.map(Outcome::Motion)
    }

    fn run_gripper(&self, open: bool) -> Result<Outcome, ControlError> {
        Self::require_idle(*lock(&self.status))?;
        let mut backend = lock(&self.backend);
        let g = backend.set_gripper(open)?;
        self.update_gripper(&g);
        drop(backend);
        self.publish();
        Ok(Outcome::Gripper(g))
    }

    fn run_stop(&self) -> Result<Outcome, ControlError> {
        {
            let st = lock(&self.status);
            if !st.is_connected() {
                return Err(ControlError::not_connected());
            }
            if *st == RobotStatus::Moving {
                self.abort.store(true, Ordering::SeqCst);
            }
        }
        // Waits for an aborted motion to hand the backend back.
        let mut backend = lock(&self.backend);
        let stopped = backend.stop();
        let changed = {
            let mut st = lock(&self.status);
            if *st == RobotStatus::Moving {
                *st = RobotStatus::Idle;
                true
            } else {
                false
            }
        };
        drop(backend);
        if changed {
            self.publish();
        }
        stopped?;
        Ok(Outcome::Stopped(*lock(&self.status)))
    }
}

impl RobotControl for Robot {
    fn connect(&self) -> Result<RobotStatus, ControlError> {
        if *lock(&self.status) != RobotStatus::Disconnected {
            return Err(ControlError::invalid_params("already connected"));
        }
        let mut backend = lock(&self.backend);
        backend.connect()?;
        self.refresh_from_backend(backend.as_mut());
        drop(backend);
        self.set_status(RobotStatus::Idle);
        Ok(RobotStatus::Idle)
    }

    fn disconnect(&self) -> RobotStatus {
        if *lock(&self.status) == RobotStatus::Disconnected {
            return RobotStatus::Disconnected;
        }
        self.abort.store(true, Ordering::SeqCst);
        let mut backend = lock(&self.backend);
        backend.disconnect();
        drop(backend);
        self.set_status(RobotStatus::Disconnected);
        RobotStatus::Disconnected
    }

    fn read_joint_state(&self) -> Result<JointVector, ControlError> {
        if !lock(&self.status).is_connected() {
            return Err(ControlError::not_connected());
        }
        match self.backend.try_lock() {
            Ok(mut b) => b.joint_state(),
            // Motion in progress: report the last published state.
            Err(_) => Ok(lock(&self.telemetry).joints),
        }
    }

    fn read_tcp_pose(&self) -> Result<Pose, ControlError> {
        if !lock(&self.status).is_connected() {
            return Err(ControlError::not_connected());
        }
        match self.backend.try_lock() {
            Ok(mut b) => b.tcp_pose(),
            Err(_) => Ok(lock(&self.telemetry).tcp),
        }
    }

    fn read_gripper(&self) -> Result<GripperState, ControlError> {
        if !lock(&self.status).is_connected() {
            return Err(ControlError::not_connected());
        }
        match self.backend.try_lock() {
            Ok(mut b) => b.gripper_state(),
            Err(_) => {
                let t = lock(&self.telemetry);
                Ok(GripperState {
                    open: t.gripper_open,
                    holding: t.holding.clone(),
                })
            }
        }
    }

    fn execute(&self, command: &Command) -> Result<Outcome, ControlError> {
        if let Some(log) = lock(&self.tap).as_ref() {
            log.push(command.clone());
        }
        if !lock(&self.status).is_connected() {
            return Err(ControlError::not_connected());
        }
        command.validate()?;
        match command {
            Command::MoveJoints { .. } | Command::MoveLinear { .. } | Command::Home => {
                self.run_motion(command)
            }
            Command::SetGripper { open } => self.run_gripper(*open),
            Command::Stop => self.run_stop(),
        }
    }

    fn status(&self) -> RobotStatus {
        *lock(&self.status)
    }
}

/// Convenience for callers holding a finished motion.
pub fn expect_motion(outcome: Outcome) -> Result<MotionResult, ControlError> {
    match outcome {
        Outcome::Motion(m) => Ok(m),
        other => Err(ControlError::internal(format!(
            "expected a motion result, got {other:?}"
        ))),
    }
}
