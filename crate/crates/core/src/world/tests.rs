use super::*;
use crate::tasks::TaskRegistry;

fn spawn(task: u8) -> WorldState {
    let scene = Scene::builtin();
    TaskRegistry::builtin(&scene).spawn(scene, task).unwrap()
}

fn head_to(world: &mut WorldState, agent: &str, target: &str) {
    let pos = world.resolve_target(target).unwrap();
    let a = world.agents.get_mut(agent).unwrap();
    a.heading_target = Some(pos);
    a.pending = Some(PendingAction {
        call_id: Some(format!("m-{agent}")),
        kind: PendingKind::Arrival {
            target: target.into(),
        },
    });
}

fn run(world: &mut WorldState, seconds: f64) -> Vec<Notice> {
    let mut out = Vec::new();
    let ticks = (seconds / 0.1).round() as usize;
    for _ in 0..ticks {
        out.extend(world.step(0.1));
        world.check_invariants().unwrap();
    }
    out
}

#[test]
fn task1_world_holds_only_the_candle() {
    let w = spawn(1);
    assert_eq!(w.entities.keys().collect::<Vec<_>>(), vec!["candle"]);
    assert!(w.doors.is_empty());
    assert_eq!(w.agents.len(), 3);
    assert_eq!(w.clock, 0.0);
}

#[test]
fn task7_vase_rests_on_bed() {
    let w = spawn(7);
    assert_eq!(w.entities["vase"].location, Location::Inside("bed".into()));
    assert!(!w.entities["vase"].broken);
    assert!(!w.entities["bed"].flipped);
}

#[test]
fn empty_subset_is_valid() {
    let scene = Scene::builtin();
    let mut task = TaskRegistry::builtin(&scene).get(1).unwrap().clone();
    task.entity_subset.clear();
    task.goal.clear();
    let w = WorldState::spawn(scene, &task).unwrap();
    assert!(w.entities.is_empty());
    w.check_invariants().unwrap();
}

#[test]
fn kinematics_reach_target_within_budget() {
    let mut w = spawn(1);
    let start = w.agents["Neptune"].position.clone();
    let target = Position::new(start.x + 3.0, start.y, &start.region);
    w.agents.get_mut("Neptune").unwrap().heading_target = Some(target.clone());
    w.step(2.0);
    assert_eq!(w.agents["Neptune"].position, target);
    assert!(w.agents["Neptune"].heading_target.is_none());
}

#[test]
fn idle_world_only_advances_clock() {
    let mut w = spawn(4);
    let before = w.clone();
    assert!(w.step(0.5).is_empty());
    assert_eq!(w.clock, 0.5);
    w.clock = 0.0;
    assert_eq!(w, before);
}

#[test]
fn arrival_notice_reports_carrying() {
    let mut w = spawn(1);
    head_to(&mut w, "Neptune", "candle");
    let notices = run(&mut w, 5.0);
    assert_eq!(
        notices,
        vec![Notice::Settled {
            agent: "Neptune".into(),
            call_id: Some("m-Neptune".into()),
            success: true,
            feedback: "You arrived at the candle, carrying nothing.".into(),
        }]
    );
}

#[test]
fn timed_door_closes_and_blocks() {
    let mut w = spawn(5);
    let door = w.doors.get_mut("glass_door").unwrap();
    door.open = true;
    door.timer_remaining = Some(0.1);
    let notices = w.step(0.2);
    assert_eq!(
        notices,
        vec![Notice::DoorClosed {
            door: "glass_door".into()
        }]
    );
    assert!(!w.doors["glass_door"].open);
    let neptune = w.agents["Neptune"].profile.clone();
    let reach = w.scene().reachable_regions("main_front", &neptune, |e| {
        !matches!(
            nav::passage(e, &neptune, &w.doors),
            nav::Passage::Blocked(_) | nav::Passage::Wait(_)
        )
    });
    assert!(!reach.contains("back_room"));
}

#[test]
fn mover_waits_at_closed_glass_door_then_gives_up() {
    let mut w = spawn(5);
    head_to(&mut w, "Neptune", "chair");
    let notices = run(&mut w, 30.0);
    assert_eq!(notices.len(), 1);
    match &notices[0] {
        Notice::Settled {
            success, feedback, ..
        } => {
            assert!(!success);
            assert_eq!(
                feedback,
                "You could not reach the chair: the glass door stayed closed."
            );
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(w.agents["Neptune"].position.region, "main_back");
}

#[test]
fn waiting_mover_passes_when_door_opens() {
    let mut w = spawn(5);
    head_to(&mut w, "Neptune", "chair");
    run(&mut w, 8.0);
    assert_eq!(w.agents["Neptune"].position.region, "main_back");
    let door = w.doors.get_mut("glass_door").unwrap();
    door.open = true;
    door.timer_remaining = Some(6.0);
    run(&mut w, 4.0);
    assert_eq!(w.agents["Neptune"].position.region, "back_room");
}

#[test]
fn locked_door_fails_motion_with_reason() {
    let mut w = spawn(4);
    head_to(&mut w, "Neptune", "yellow key");
    let notices = w.step(0.1);
    match &notices[..] {
        [Notice::Settled {
            success: false,
            feedback,
            ..
        }] => {
            assert_eq!(
                feedback,
                "You could not reach the yellow key: the red door is locked."
            )
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(w.agents["Neptune"].heading_target.is_none());
}

#[test]
fn halt_keeps_position_and_holding() {
    let mut w = spawn(1);
    head_to(&mut w, "Neptune", "candle");
    run(&mut w, 1.0);
    let here = w.agents["Neptune"].position.clone();
    assert_eq!(w.halt("Neptune"), Some("m-Neptune".into()));
    run(&mut w, 1.0);
    assert_eq!(w.agents["Neptune"].position, here);
}

fn ready_flip(w: &mut WorldState, agent: &str) {
    let bed = w.entity_position("bed").unwrap();
    let a = w.agents.get_mut(agent).unwrap();
    a.position = bed;
    a.pending = Some(PendingAction {
        call_id: Some(format!("f-{agent}")),
        kind: PendingKind::Flip {
            entity: "bed".into(),
            expires_at: w.clock + 10.0,
        },
    });
}

#[test]
fn flip_with_vase_aboard_breaks_it() {
    let mut w = spawn(7);
    ready_flip(&mut w, "Jupiter");
    ready_flip(&mut w, "Neptune");
    let notices = w.step(0.1);
    assert_eq!(notices.len(), 2);
    assert!(w.entities["bed"].flipped);
    assert!(w.entities["vase"].broken);
    assert_eq!(w.entities["vase"].location, Location::Destroyed);
    match &notices[0] {
        Notice::Settled {
            agent,
            feedback,
            success: true,
            ..
        } => {
            assert_eq!(agent, "Jupiter");
            assert_eq!(
                feedback,
                "You flipped the bed together with Neptune. The vase fell off and broke."
            );
        }
        other => panic!("unexpected {other:?}"),
    }
    w.check_invariants().unwrap();
}

#[test]
fn lone_flip_expires() {
    let mut w = spawn(7);
    ready_flip(&mut w, "Jupiter");
    let notices = run(&mut w, 10.0);
    assert_eq!(notices.len(), 1);
    assert!(
        matches!(&notices[0], Notice::Settled { success: false, feedback, .. }
        if feedback == "Nobody joined you in time, so the bed was not flipped.")
    );
    assert!(!w.entities["bed"].flipped);
}

#[test]
fn describe_task4_mentions_keys_and_door() {
    let w = spawn(4);
    let text = describe(&w, None);
    assert!(text.contains("elevated area with a red key"), "{text}");
    assert!(text.contains("a locked red door"), "{text}");
    assert!(text.contains("a yellow key behind the glass"), "{text}");
    assert_eq!(text, describe(&w.clone(), None));
}

#[test]
fn describe_reports_holding_and_viewpoint() {
    let mut w = spawn(4);
    w.entities.get_mut("yellow_key").unwrap().location = Location::HeldBy("Neptune".into());
    w.agents.get_mut("Neptune").unwrap().holding = Some("yellow_key".into());
    let text = describe(&w, None);
    assert!(
        text.contains("Neptune is holding the yellow key."),
        "{text}"
    );
    let own = describe(&w, Some("Neptune"));
    assert!(own.contains("You are holding the yellow key."), "{own}");
}

#[test]
fn facts_change_with_doors() {
    let mut w = spawn(5);
    let before = facts(&w);
    assert_eq!(before["door:glass_door"], "The glass door is closed.");
    w.doors.get_mut("glass_door").unwrap().open = true;
    let after = facts(&w);
    assert_eq!(after["door:glass_door"], "The glass door is open.");
}
