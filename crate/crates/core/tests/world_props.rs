mod common;

use std::collections::BTreeSet;

use common::{candidate_calls, spawn, valid_calls};
use proptest::prelude::*;
use teamsim_core::actions::{execute, validate, ToolCall};
use teamsim_core::world::describe;
use teamsim_core::world::nav::{passage, Passage};
use teamsim_core::{goal_satisfied, registry_for, TaskRegistry, WorldState};

const DT: f64 = 0.1;

/// Steps once and checks every per-step property against the world before.
fn checked_step(w: &mut WorldState, dt: f64) {
    let before = w.clone();
    w.step(dt);
    w.check_invariants().unwrap();
    let ids_before: BTreeSet<&String> = before.entities.keys().collect();
    let ids_after: BTreeSet<&String> = w.entities.keys().collect();
    assert_eq!(ids_before, ids_after, "entities appeared or vanished");
    for (name, a) in &w.agents {
        let b = &before.agents[name];
        let moved = a.position.distance(&b.position);
        assert!(
            moved <= a.profile.speed * dt + 1e-6,
            "{name} moved {moved} m in {dt} s at {} m/s",
            a.profile.speed
        );
        if a.position.region != b.position.region {
            let crossed = w.scene().edges.iter().any(|e| {
                e.other(&b.position.region) == Some(a.position.region.as_str())
                    && passage(e, &a.profile, &before.doors) == Passage::Open
            });
            assert!(
                crossed,
                "{name} went from {} to {} without an open passage",
                b.position.region, a.position.region
            );
        }
    }
}

fn apply(w: &mut WorldState, agent: &str, choice: usize) {
    let calls = candidate_calls(w, agent);
    if calls.is_empty() {
        return;
    }
    let call = &calls[choice % calls.len()];
    let scene = w.scene().clone();
    let tasks = TaskRegistry::builtin(&scene);
    let registry = registry_for(
        &w.agent(agent).unwrap().profile,
        tasks.get(w.task_id.unwrap()).unwrap(),
        &scene,
    );
    match validate(call, &registry, w) {
        Ok(token) => {
            let before = w.clone();
            if execute(token, w).is_err() {
                assert_eq!(*w, before, "a failed execute changed the world");
            }
        }
        Err(rejection) => assert!(!rejection.feedback.is_empty()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn random_operations_preserve_invariants(
        task in 1u8..=7,
        ops in proptest::collection::vec((0usize..3, 0usize..64, 1usize..40), 1..14),
    ) {
        let mut w = spawn(task);
        let roster = w.roster();
        for (agent, choice, steps) in ops {
            apply(&mut w, &roster[agent], choice);
            for _ in 0..steps {
                checked_step(&mut w, DT);
            }
        }
    }

    #[test]
    fn describe_is_pure(task in 1u8..=7, ops in proptest::collection::vec((0usize..3, 0usize..64, 1usize..30), 0..6)) {
        let mut w = spawn(task);
        let roster = w.roster();
        for (agent, choice, steps) in ops {
            apply(&mut w, &roster[agent], choice);
            for _ in 0..steps {
                w.step(DT);
            }
        }
        let snapshot = serde_json::to_string(&w).unwrap();
        let copy = w.clone();
        let text = describe(&w, None);
        prop_assert_eq!(&text, &describe(&copy, None));
        prop_assert_eq!(&text, &describe(&w, None));
        for name in &roster {
            prop_assert_eq!(describe(&w, Some(name)), describe(&copy, Some(name)));
        }
        prop_assert_eq!(snapshot, serde_json::to_string(&w).unwrap());
    }

    #[test]
    fn timed_door_closes_within_one_tick(open_s in 0.5f64..10.0, dt in 0.01f64..0.5) {
        let mut w = spawn(5);
        w.config.door_open_s = open_s;
        let plate = w.entity_position("pressure_plate").unwrap();
        w.agents.get_mut("Jupiter").unwrap().position = plate;
        let call = valid_calls(&w, "Jupiter").into_iter().find(|c| c.function == "step_on_plate").unwrap();
        let scene = w.scene().clone();
        let tasks = TaskRegistry::builtin(&scene);
        let registry = registry_for(&w.agent("Jupiter").unwrap().profile, tasks.get(5).unwrap(), &scene);
        execute(validate(&call, &registry, &w).unwrap(), &mut w).unwrap();
        let opened = w.clock;
        prop_assert!(w.doors["glass_door"].open);
        prop_assert_eq!(w.doors["glass_door"].timer_remaining, Some(open_s));
        let mut guard = 0;
        while w.doors["glass_door"].open {
            w.step(dt);
            w.check_invariants().unwrap();
            guard += 1;
            prop_assert!(guard < 10_000);
        }
        let elapsed = w.clock - opened;
        prop_assert!(elapsed >= open_s - 1e-9, "closed early after {elapsed}");
        prop_assert!(elapsed < open_s + dt + 1e-9, "closed late after {elapsed}");
    }
}

#[test]
fn expired_glass_door_blocks_ground_path() {
    let mut w = spawn(5);
    {
        let door = w.doors.get_mut("glass_door").unwrap();
        door.open = true;
        door.timer_remaining = Some(0.1);
    }
    w.step(0.2);
    assert!(!w.doors["glass_door"].open);
    let neptune = w.agent("Neptune").unwrap().clone();
    let doors = w.doors.clone();
    let open_only =
        |e: &teamsim_core::world::Edge| passage(e, &neptune.profile, &doors) == Passage::Open;
    let reachable =
        w.scene()
            .reachable_regions(&neptune.position.region, &neptune.profile, open_only);
    assert!(
        !reachable.contains("back_room"),
        "back room reachable through a closed door: {reachable:?}"
    );
    let pluto = w.agent("Pluto").unwrap().clone();
    let reachable = w
        .scene()
        .reachable_regions(&pluto.position.region, &pluto.profile, |e| {
            passage(e, &pluto.profile, &doors) == Passage::Open
        });
    assert!(!reachable.contains("back_room"));
}

#[test]
fn capability_soundness_over_every_task() {
    let scene = teamsim_core::Scene::builtin();
    let tasks = TaskRegistry::builtin(&scene);
    for task in tasks.list() {
        let base = spawn(task.id);
        for agent in base.roster() {
            let profile = base.agent(&agent).unwrap().profile.clone();
            let registry = registry_for(&profile, task, &scene);
            let names: Vec<String> = base.entities.values().map(|e| e.name.clone()).collect();
            for function in [
                "move_to",
                "pick_up",
                "put_down",
                "open_door",
                "step_on_plate",
                "throw_away",
                "flip",
            ] {
                for name in &names {
                    let param = match function {
                        "move_to" => "location",
                        "open_door" => "door",
                        "step_on_plate" => "plate",
                        _ => "object",
                    };
                    let mut w = base.clone();
                    if let Some(p) = w.entity_position(&w.entity_by_name(name).unwrap().id.clone())
                    {
                        if w.scene().position_valid(&p) {
                            w.agents.get_mut(&agent).unwrap().position = p;
                        }
                    }
                    let mut call = ToolCall::new("c", function, &[(param, name.as_str())]);
                    call.issuer = agent.clone();
                    let entity = w.entity_by_name(name).unwrap().clone();
                    let verdict = validate(&call, &registry, &w);
                    if function == "pick_up"
                        && entity.weight() == teamsim_core::world::Weight::Heavy
                        && !profile.can_lift_heavy()
                    {
                        assert!(
                            verdict.is_err(),
                            "{agent} may lift the {name} in task {}",
                            task.id
                        );
                    }
                    if function == "move_to" && entity.id == "elevated_area" && !profile.can_fly() {
                        assert!(
                            verdict.is_err(),
                            "{agent} may drive onto the elevated area in task {}",
                            task.id
                        );
                    }
                }
            }
        }
    }
}

/// Runs the world until every pending action of every agent has settled.
fn settle(w: &mut WorldState) {
    for _ in 0..400 {
        if w.agents.values().all(|a| a.pending.is_none()) {
            return;
        }
        w.step(DT);
    }
}

fn exec(w: &mut WorldState, call: &ToolCall) {
    let scene = w.scene().clone();
    let tasks = TaskRegistry::builtin(&scene);
    let registry = registry_for(
        &w.agent(&call.issuer).unwrap().profile,
        tasks.get(w.task_id.unwrap()).unwrap(),
        &scene,
    );
    if let Ok(token) = validate(call, &registry, w) {
        let _ = execute(token, w);
    }
}

fn broken_vase_world() -> WorldState {
    let mut w = spawn(7);
    let bed = w.entity_position("bed").unwrap();
    for agent in ["Jupiter", "Neptune"] {
        w.agents.get_mut(agent).unwrap().position = bed.clone();
        let flip = valid_calls(&w, agent)
            .into_iter()
            .find(|c| c.function == "flip")
            .unwrap();
        exec(&mut w, &flip);
    }
    settle(&mut w);
    assert!(w.entity("bed").unwrap().flipped);
    assert!(w.entity("vase").unwrap().broken);
    w
}

#[test]
fn broken_vase_makes_task7_unreachable() {
    let task = TaskRegistry::builtin(&teamsim_core::Scene::builtin())
        .get(7)
        .unwrap()
        .clone();
    let start = broken_vase_world();
    assert!(!goal_satisfied(&task, &start).unwrap());
    // Exhaustive search over two rounds of actions by any agent.
    let mut frontier = vec![start];
    for _ in 0..2 {
        let mut next = Vec::new();
        for w in &frontier {
            for agent in w.roster() {
                for call in valid_calls(w, &agent) {
                    let mut w2 = w.clone();
                    exec(&mut w2, &call);
                    settle(&mut w2);
                    assert!(
                        w2.entity("vase").unwrap().broken,
                        "vase repaired by {call:?}"
                    );
                    assert!(!goal_satisfied(&task, &w2).unwrap());
                    next.push(w2);
                }
            }
        }
        next.dedup_by(|a, b| a == b);
        frontier = next;
    }
}

#[test]
fn vase_picked_first_allows_success() {
    let task = TaskRegistry::builtin(&teamsim_core::Scene::builtin())
        .get(7)
        .unwrap()
        .clone();
    let mut w = spawn(7);
    let vase = w.entity_position("vase").unwrap();
    w.agents.get_mut("Neptune").unwrap().position = vase;
    let pick = valid_calls(&w, "Neptune")
        .into_iter()
        .find(|c| c.function == "pick_up")
        .unwrap();
    exec(&mut w, &pick);
    let bed = w.entity_position("bed").unwrap();
    for agent in ["Jupiter", "Neptune"] {
        w.agents.get_mut(agent).unwrap().position = bed.clone();
        let flip = valid_calls(&w, agent)
            .into_iter()
            .find(|c| c.function == "flip")
            .unwrap();
        exec(&mut w, &flip);
    }
    settle(&mut w);
    assert!(goal_satisfied(&task, &w).unwrap());
    assert!(!w.entity("vase").unwrap().broken);
}

#[test]
fn crossing_through_open_glass_door_is_checked() {
    let mut w = spawn(5);
    {
        let door = w.doors.get_mut("glass_door").unwrap();
        door.open = true;
        door.timer_remaining = Some(30.0);
    }
    w.config.door_open_s = 30.0;
    let go = valid_calls(&w, "Neptune")
        .into_iter()
        .find(|c| c.function == "move_to" && c.arg("location") == Some("chair"))
        .unwrap();
    exec(&mut w, &go);
    let mut regions = vec![w.agent("Neptune").unwrap().position.region.clone()];
    for _ in 0..300 {
        checked_step(&mut w, DT);
        let r = &w.agent("Neptune").unwrap().position.region;
        if regions.last() != Some(r) {
            regions.push(r.clone());
        }
    }
    assert_eq!(
        regions.last().map(String::as_str),
        Some("back_room"),
        "{regions:?}"
    );
    assert!(regions.len() >= 2);
}
