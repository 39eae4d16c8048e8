mod common;

use cellctl::apps::binpick::{self, BinPickJob};
use cellctl::core::{Command, ErrorCode, RobotControl};
use cellctl::skills::{CancelToken, SkillEnv, SkillRegistry, SkillState};
use cellctl::Robot;
use common::{app_dependency_violations, connected, default_cell, APP_SOURCE};

fn job() -> BinPickJob {
    let d = default_cell();
    BinPickJob::from_item_poses(d.scene.unwrap().items.into_iter().map(|i| i.pose))
}

fn run_on(robot: &Robot) -> (cellctl::skills::SkillResult, Vec<Command>) {
    let d = default_cell();
    let log = robot.record_commands();
    let r = binpick::run(
        robot,
        &SkillRegistry::with_builtins(),
        &SkillEnv::from_descriptor(&d),
        &job(),
        &CancelToken::new(),
        &mut |_| {},
    );
    (r, log.commands())
}

fn through_first_close(cmds: &[Command]) -> &[Command] {
    let i = cmds
        .iter()
        .position(|c| *c == Command::SetGripper { open: false })
        .expect("gripper closes");
    &cmds[..=i]
}

#[test]
fn same_application_on_two_backends() {
    let sim = connected(&default_cell());
    let (result, sim_cmds) = run_on(&sim);
    assert_eq!(result.state, SkillState::Succeeded, "{}", result.detail);
    assert_eq!(result.outputs["completed"], 10);

    let mut d = default_cell();
    assert!(d.activate("loopback"));
    let lb = connected(&d);
    assert_eq!(lb.status(), cellctl::core::RobotStatus::Idle);
    let (result, lb_cmds) = run_on(&lb);
    // The recorder never holds anything, so the first pick cannot succeed.
    assert_eq!(result.state, SkillState::Failed(ErrorCode::GraspFailed));
    assert_eq!(through_first_close(&sim_cmds), through_first_close(&lb_cmds));
    assert_eq!(lb_cmds.len(), through_first_close(&lb_cmds).len());
}

#[test]
fn application_depends_only_on_contract_and_skills() {
    assert_eq!(app_dependency_violations(APP_SOURCE), Vec::<String>::new());
}

#[test]
fn dependency_check_catches_violations() {
    assert_eq!(
        app_dependency_violations("use crate::backends::SimulatedArm;").len(),
        3
    );
    assert_eq!(app_dependency_violations("fn f(r: &crate::Robot) {}").len(), 1);
    assert!(app_dependency_violations("use cellctl_core::RobotControl;").is_empty());
}
