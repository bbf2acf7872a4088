#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use teamsim_core::actions::{validate, ToolCall, GROUND};
use teamsim_core::session::{Orchestrator, SessionConfig};
use teamsim_core::{registry_for, Backend, Scene, ScriptedBackend, TaskRegistry, WorldState};

pub fn scripts_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scripts")
}

pub fn spawn(task: u8) -> WorldState {
    let scene = Scene::builtin();
    TaskRegistry::builtin(&scene)
        .spawn(scene.clone(), task)
        .unwrap()
}

/// Every call an agent's registry allows, one per eligible argument combo.
pub fn candidate_calls(world: &WorldState, agent: &str) -> Vec<ToolCall> {
    let scene = world.scene().clone();
    let tasks = TaskRegistry::builtin(&scene);
    let task = tasks.get(world.task_id.unwrap()).unwrap();
    let profile = &world.agent(agent).unwrap().profile;
    let registry = registry_for(profile, task, &scene);
    let mut out = Vec::new();
    for f in &registry.functions {
        let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for p in &f.parameters {
            let mut next = Vec::new();
            for c in &combos {
                for v in &p.eligible_values {
                    let mut c = c.clone();
                    c.push((p.name.clone(), v.clone()));
                    next.push(c);
                }
            }
            combos = next;
        }
        for c in combos {
            let args: Vec<(&str, &str)> = c.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            let mut call = ToolCall::new(&format!("c{}", out.len()), &f.name, &args);
            call.issuer = agent.to_string();
            out.push(call);
        }
    }
    out
}

/// Calls that would pass validation right now.
pub fn valid_calls(world: &WorldState, agent: &str) -> Vec<ToolCall> {
    let scene = world.scene().clone();
    let tasks = TaskRegistry::builtin(&scene);
    let task = tasks.get(world.task_id.unwrap()).unwrap();
    let registry = registry_for(&world.agent(agent).unwrap().profile, task, &scene);
    candidate_calls(world, agent)
        .into_iter()
        .filter(|c| validate(c, &registry, world).is_ok())
        .collect()
}

pub fn ground() -> &'static str {
    GROUND
}

pub fn scripted(rules: &str) -> Arc<dyn Backend> {
    Arc::new(ScriptedBackend::from_json(rules, "inline").unwrap())
}

pub fn orchestrator(rules: &str, task: u8) -> Orchestrator {
    Orchestrator::with_task(SessionConfig::scripted("inline"), scripted(rules), task).unwrap()
}

pub fn scenario_backend(name: &str) -> Arc<dyn Backend> {
    Arc::new(ScriptedBackend::load(&scripts_dir().join(name)).unwrap())
}
