//! Per-agent function descriptors, validation of proposed tool calls and
//! their execution against the world.

mod exec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::tasks::TaskSpec;
use crate::world::{AgentProfile, EntityKind, Scene, USER_LOCATION};

pub use exec::{
    execute, validate, Execution, ExecutionRace, ValidatedCall, ValidationResult, Verdict,
};

const DESCRIPTOR_TEMPLATES: &str = include_str!("../../fixtures/functions.json");

/// Surface name meaning "where the agent stands".
pub const GROUND: &str = "ground";

/// A proposed invocation from an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub function: String,
    /// Argument values as received. Anything but a string is rejected.
    pub arguments: BTreeMap<String, Value>,
    #[serde(default)]
    pub issuer: String,
}

impl ToolCall {
    pub fn new(id: &str, function: &str, args: &[(&str, &str)]) -> Self {
        Self {
            id: id.to_string(),
            function: function.to_string(),
            arguments: args
                .iter()
                .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
                .collect(),
            issuer: String::new(),
        }
    }

    pub fn arg(&self, name: &str) -> Option<&str> {
        self.arguments.get(name).and_then(Value::as_str)
    }

    /// Arguments as compact JSON with sorted keys.
    pub fn arguments_json(&self) -> String {
        serde_json::to_string(&self.arguments).expect("json values serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Location,
    Object,
    Surface,
    Door,
    Plate,
    Flippable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub description: String,
    pub required: bool,
    pub eligible_values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDescriptor {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

impl FunctionDescriptor {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// The descriptor in chat-completions `tools` format.
    pub fn to_wire(&self) -> Value {
        let properties: serde_json::Map<String, Value> = self
            .parameters
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    json!({
                        "type": "string",
                        "description": p.description,
                        "enum": p.eligible_values,
                    }),
                )
            })
            .collect();
        let required: Vec<&str> = self
            .parameters
            .iter()
            .filter(|p| p.required)
            .map(|p| p.name.as_str())
            .collect();
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                }
            }
        })
    }
}

#[derive(Deserialize)]
struct WireTool {
    function: WireFunction,
}

#[derive(Deserialize)]
struct WireFunction {
    name: String,
    description: String,
    parameters: WireParams,
}

#[derive(Deserialize)]
struct WireParams {
    properties: BTreeMap<String, WireProperty>,
    #[serde(default)]
    required: Vec<String>,
}

#[derive(Deserialize)]
struct WireProperty {
    description: String,
    #[serde(rename = "x-ref")]
    kind: ParamKind,
}

fn templates() -> Vec<FunctionDescriptor> {
    let tools: Vec<WireTool> =
        serde_json::from_str(DESCRIPTOR_TEMPLATES).expect("descriptor fixture is valid");
    tools
        .into_iter()
        .map(|t| {
            let f = t.function;
            // Keep the fixture's property order stable: required first, then the rest.
            let mut parameters: Vec<ParamSpec> = f
                .parameters
                .properties
                .into_iter()
                .map(|(name, p)| ParamSpec {
                    required: f.parameters.required.contains(&name),
                    name,
                    kind: p.kind,
                    description: p.description,
                    eligible_values: Vec::new(),
                })
                .collect();
            parameters.sort_by_key(|p| !p.required);
            FunctionDescriptor {
                name: f.name,
                description: f.description,
                parameters,
            }
        })
        .collect()
}

/// One agent's function set for one task. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    pub agent: String,
    pub functions: Vec<FunctionDescriptor>,
}

impl Registry {
    pub fn get(&self, name: &str) -> Option<&FunctionDescriptor> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.functions.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn to_wire(&self) -> Vec<Value> {
        self.functions
            .iter()
            .map(FunctionDescriptor::to_wire)
            .collect()
    }
}

/// Builds the function set for an agent in a task. Parameters only list
/// entities of the task the agent could ever act on; a function whose
/// required parameter would have no eligible value is left out.
pub fn registry_for(profile: &AgentProfile, task: &TaskSpec, scene: &Scene) -> Registry {
    let start = scene
        .agent(&profile.name)
        .map(|a| a.start.region.clone())
        .unwrap_or_default();
    let regions = scene.reachable_regions(&start, profile, |_| true);
    let specs: Vec<_> = task
        .entity_subset
        .iter()
        .filter_map(|id| scene.entity(id))
        .collect();
    let region_of = |id: &str| {
        let mut spec = scene.entity(id)?;
        for _ in 0..scene.entities.len() {
            if let Some(at) = &spec.at {
                return Some(at.region.clone());
            }
            spec = scene.entity(spec.on.as_deref()?)?;
        }
        None
    };
    let reachable = |id: &str| region_of(id).is_some_and(|r| regions.contains(&r));
    let names = |pred: &dyn Fn(&EntityKind) -> bool| -> Vec<String> {
        specs
            .iter()
            .filter(|s| pred(&s.kind) && reachable(&s.id))
            .map(|s| s.name.clone())
            .collect()
    };

    let mut locations = names(&|_| true);
    locations.push(USER_LOCATION.to_string());
    let objects = names(&|k| {
        k.is_movable() && (k.weight() == crate::world::Weight::Light || profile.can_lift_heavy())
    });
    let mut surfaces = vec![GROUND.to_string()];
    surfaces.extend(names(&|k| k.is_surface()));
    let doors = names(&|k| matches!(k, EntityKind::Door { .. }));
    let plates = names(&|k| *k == EntityKind::PressurePlate);
    let flippables = if profile.can_fly() {
        Vec::new()
    } else {
        names(&|k| *k == EntityKind::Bed)
    };
    let has_bin = specs.iter().any(|s| s.kind == EntityKind::TrashBin);

    let mut functions = Vec::new();
    for mut f in templates() {
        if f.name == "throw_away" && !has_bin {
            continue;
        }
        for p in &mut f.parameters {
            p.eligible_values = match p.kind {
                ParamKind::Location => locations.clone(),
                ParamKind::Object => objects.clone(),
                ParamKind::Surface => surfaces.clone(),
                ParamKind::Door => doors.clone(),
                ParamKind::Plate => plates.clone(),
                ParamKind::Flippable => flippables.clone(),
            };
        }
        if f.parameters.iter().all(|p| !p.eligible_values.is_empty()) {
            functions.push(f);
        }
    }
    Registry {
        agent: profile.name.clone(),
        functions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskRegistry;

    fn reg(agent: &str, task: u8) -> Registry {
        let scene = Scene::builtin();
        let tasks = TaskRegistry::builtin(&scene);
        let profile = &scene.agent(agent).unwrap().profile;
        registry_for(profile, tasks.get(task).unwrap(), &scene)
    }

    fn eligible(r: &Registry, f: &str, p: &str) -> Vec<String> {
        r.get(f)
            .and_then(|f| f.param(p))
            .map(|p| p.eligible_values.clone())
            .unwrap_or_default()
    }

    #[test]
    fn heavy_objects_only_for_jupiter() {
        assert!(eligible(&reg("Jupiter", 3), "pick_up", "object").contains(&"dumbbell".to_string()));
        assert!(reg("Pluto", 3).get("pick_up").is_none());
        assert!(reg("Neptune", 3).get("pick_up").is_none());
    }

    #[test]
    fn elevated_area_only_for_flyers() {
        let pluto = eligible(&reg("Pluto", 4), "move_to", "location");
        assert!(pluto.contains(&"elevated area".to_string()));
        assert!(pluto.contains(&"red key".to_string()));
        for ground in ["Jupiter", "Neptune"] {
            let locs = eligible(&reg(ground, 4), "move_to", "location");
            assert!(!locs.contains(&"elevated area".to_string()), "{ground}");
            assert!(!locs.contains(&"red key".to_string()), "{ground}");
        }
    }

    #[test]
    fn functions_without_targets_are_elided() {
        let scene = Scene::builtin();
        let mut task = TaskRegistry::builtin(&scene).get(3).unwrap().clone();
        task.entity_subset = vec!["fridge".into()];
        for agent in ["Jupiter", "Pluto", "Neptune"] {
            let r = registry_for(&scene.agent(agent).unwrap().profile, &task, &scene);
            assert_eq!(r.names(), vec!["move_to"], "{agent}");
        }
    }

    #[test]
    fn flip_is_for_ground_agents() {
        assert!(reg("Jupiter", 7).get("flip").is_some());
        assert!(reg("Neptune", 7).get("flip").is_some());
        assert!(reg("Pluto", 7).get("flip").is_none());
    }

    #[test]
    fn wire_form_has_enums_and_required() {
        let r = reg("Jupiter", 6);
        let wire = r.get("put_down").unwrap().to_wire();
        assert_eq!(
            wire["function"]["parameters"]["required"],
            json!(["object"])
        );
        let surfaces = &wire["function"]["parameters"]["properties"]["surface"]["enum"];
        assert_eq!(surfaces, &json!(["ground"]));
        let t = wire["function"]["parameters"]["properties"]["object"]["enum"]
            .as_array()
            .unwrap();
        assert_eq!(t.len(), 3);
    }
}
