//! Validation and execution of tool calls.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ParamSpec, Registry, ToolCall, GROUND};
use crate::world::geometry::EPS;
use crate::world::{EntityKind, Location, PendingAction, PendingKind, PlateEvent, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    UnknownFunction,
    UnknownParameter {
        param: String,
        given: String,
        eligible: Vec<String>,
    },
    PreconditionFailed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub verdict: Verdict,
    pub feedback: String,
}

impl ValidationResult {
    fn precondition(reason: String, feedback: String) -> Self {
        Self {
            verdict: Verdict::PreconditionFailed { reason },
            feedback,
        }
    }
}

/// Proof that a call passed validation. Only `validate` creates one and
/// `execute` consumes it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedCall {
    call: ToolCall,
}

impl ValidatedCall {
    pub fn call(&self) -> &ToolCall {
        &self.call
    }
}

/// Result of a successful execute.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub feedback: String,
    /// The action continues in the world; its result arrives as a notice.
    pub pending: bool,
}

/// The world changed between validation and execution. The world is left
/// untouched.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{feedback}")]
pub struct ExecutionRace {
    pub feedback: String,
}

/// Checks a call in order: the function, then every argument against its
/// eligible values, then world preconditions.
pub fn validate(
    call: &ToolCall,
    registry: &Registry,
    world: &WorldState,
) -> Result<ValidatedCall, ValidationResult> {
    let Some(descriptor) = registry.get(&call.function) else {
        return Err(ValidationResult {
            verdict: Verdict::UnknownFunction,
            feedback: format!(
                "There is no function called '{}'. You can only use: {}.",
                call.function,
                registry.names().join(", ")
            ),
        });
    };
    for (name, value) in &call.arguments {
        let Some(spec) = descriptor.param(name) else {
            let expected: Vec<String> = descriptor
                .parameters
                .iter()
                .map(|p| p.name.clone())
                .collect();
            return Err(ValidationResult {
                verdict: Verdict::UnknownParameter {
                    param: name.clone(),
                    given: value_text(value),
                    eligible: expected.clone(),
                },
                feedback: format!(
                    "The function {} has no parameter '{name}'. Its parameters are: {}.",
                    descriptor.name,
                    expected.join(", ")
                ),
            });
        };
        match value {
            Value::String(s) if spec.eligible_values.contains(s) => {}
            other => return Err(ineligible(&descriptor.name, spec, &value_text(other))),
        }
    }
    for spec in descriptor.parameters.iter().filter(|p| p.required) {
        if !call.arguments.contains_key(&spec.name) {
            return Err(ValidationResult {
                verdict: Verdict::UnknownParameter {
                    param: spec.name.clone(),
                    given: String::new(),
                    eligible: spec.eligible_values.clone(),
                },
                feedback: format!(
                    "The function {} needs the parameter '{}'. Eligible values: {}.",
                    descriptor.name,
                    spec.name,
                    spec.eligible_values.join(", ")
                ),
            });
        }
    }
    preconditions(call, &registry.agent, world)?;
    let mut call = call.clone();
    call.issuer = registry.agent.clone();
    Ok(ValidatedCall { call })
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn ineligible(function: &str, spec: &ParamSpec, given: &str) -> ValidationResult {
    let closest = closest_match(given, &spec.eligible_values);
    let hint = closest
        .map(|c| format!(" Did you mean '{c}'?"))
        .unwrap_or_default();
    ValidationResult {
        verdict: Verdict::UnknownParameter {
            param: spec.name.clone(),
            given: given.to_string(),
            eligible: spec.eligible_values.clone(),
        },
        feedback: format!(
            "'{given}' is not an eligible {} for {function}.{hint} Eligible values: {}.",
            spec.name,
            spec.eligible_values.join(", ")
        ),
    }
}

/// The eligible value most similar to `given`: shared words first, then
/// edit similarity.
pub(crate) fn closest_match<'a>(given: &str, eligible: &'a [String]) -> Option<&'a str> {
    let given = given.to_lowercase();
    let words: Vec<&str> = given.split_whitespace().collect();
    eligible
        .iter()
        .map(|e| {
            let shared = e.split_whitespace().filter(|w| words.contains(w)).count();
            let sim = strsim::normalized_damerau_levenshtein(&given, e);
            (shared, sim, e)
        })
        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(b.2.cmp(a.2)))
        .map(|(_, _, e)| e.as_str())
}

fn reach_failure(agent_reach: f64, distance: f64, target: &str) -> ValidationResult {
    ValidationResult::precondition(
        "out of reach".to_string(),
        format!(
            "The {target} is out of reach ({distance:.1} m away, you can reach {agent_reach:.1} m). Move to the {target} first."
        ),
    )
}

/// World preconditions. Arguments are already known to be eligible.
fn preconditions(call: &ToolCall, agent: &str, world: &WorldState) -> Result<(), ValidationResult> {
    let state = world.agent(agent).ok_or_else(|| {
        ValidationResult::precondition(
            "unknown agent".into(),
            format!("There is no agent called {agent}."),
        )
    })?;
    let reach = state.profile.reach_radius;
    let within = |name: &str| -> Result<(), ValidationResult> {
        let entity = world.entity_by_name(name).ok_or_else(|| gone(name))?;
        let d = world
            .distance_to_entity(agent, &entity.id)
            .ok_or_else(|| gone(name))?;
        if d > reach + EPS {
            Err(reach_failure(reach, d, name))
        } else {
            Ok(())
        }
    };
    let holding = |name: &str| -> Result<(), ValidationResult> {
        let held = state.holding.as_ref().and_then(|h| world.entity(h));
        match held {
            Some(e) if e.name == name => Ok(()),
            Some(e) => Err(ValidationResult::precondition(
                format!("not holding the {name}"),
                format!(
                    "You are not holding the {name}, you are holding the {}.",
                    e.name
                ),
            )),
            None => Err(ValidationResult::precondition(
                format!("not holding the {name}"),
                format!("You are not holding the {name}, your hands are empty."),
            )),
        }
    };
    let arg = |p: &str| call.arg(p).unwrap_or_default();

    match call.function.as_str() {
        "move_to" => {
            let target = arg("location");
            if world.resolve_target(target).is_none() {
                return Err(gone(target));
            }
        }
        "pick_up" => {
            let name = arg("object");
            if let Some(h) = state.holding.as_ref().and_then(|h| world.entity(h)) {
                return Err(ValidationResult::precondition(
                    "hands full".into(),
                    format!("You are already holding the {}. Put it down first.", h.name),
                ));
            }
            let entity = world.entity_by_name(name).ok_or_else(|| gone(name))?;
            match &entity.location {
                Location::HeldBy(other) => {
                    return Err(ValidationResult::precondition(
                        format!("held by {other}"),
                        format!("{other} is holding the {name}."),
                    ))
                }
                Location::Destroyed => return Err(gone(name)),
                Location::Inside(host)
                    if world
                        .entity(host)
                        .is_some_and(|h| h.kind == EntityKind::TrashBin) =>
                {
                    return Err(ValidationResult::precondition(
                        "in the trash".into(),
                        format!("The {name} is in the trash bin and cannot be taken out."),
                    ))
                }
                _ => {}
            }
            within(name)?;
        }
        "put_down" => {
            holding(arg("object"))?;
            if let Some(surface) = call.arg("surface").filter(|s| *s != GROUND) {
                within(surface)?;
                if world.entity_by_name(surface).is_some_and(|e| e.flipped) {
                    return Err(ValidationResult::precondition(
                        "surface flipped".into(),
                        format!("The {surface} is flipped over, nothing can be put on it."),
                    ));
                }
            }
        }
        "open_door" => {
            let name = arg("door");
            let door_entity = world.entity_by_name(name).ok_or_else(|| gone(name))?;
            let door = world.doors.get(&door_entity.id).ok_or_else(|| gone(name))?;
            if door.open {
                return Err(ValidationResult::precondition(
                    "already open".into(),
                    format!("The {name} is already open."),
                ));
            }
            within(name)?;
            if let Some(color) = &door.locked_by {
                let key = state.holding.as_ref().and_then(|h| world.entity(h));
                let fits = matches!(key.map(|k| &k.kind), Some(EntityKind::Key { color: c }) if c == color);
                if !fits {
                    return Err(ValidationResult::precondition(
                        format!("needs the {color} key"),
                        format!(
                            "The {name} is locked. You need to hold the {color} key to open it."
                        ),
                    ));
                }
            }
        }
        "step_on_plate" => within(arg("plate"))?,
        "throw_away" => {
            let name = arg("object");
            holding(name)?;
            if !world
                .entities
                .values()
                .any(|e| e.kind == EntityKind::TrashBin)
            {
                return Err(gone("trash bin"));
            }
        }
        "flip" => {
            let name = arg("object");
            let entity = world.entity_by_name(name).ok_or_else(|| gone(name))?;
            if entity.flipped {
                return Err(ValidationResult::precondition(
                    "already flipped".into(),
                    format!("The {name} has already been flipped."),
                ));
            }
            within(name)?;
        }
        other => {
            return Err(ValidationResult {
                verdict: Verdict::UnknownFunction,
                feedback: format!("There is no function called '{other}'."),
            })
        }
    }
    Ok(())
}

fn gone(name: &str) -> ValidationResult {
    ValidationResult::precondition(
        format!("{name} unavailable"),
        format!("The {name} is not available anymore."),
    )
}

/// Applies a validated call. Preconditions are checked again against the
/// current world; if they no longer hold nothing changes.
pub fn execute(token: ValidatedCall, world: &mut WorldState) -> Result<Execution, ExecutionRace> {
    let call = token.call;
    let agent = call.issuer.clone();
    if let Err(r) = preconditions(&call, &agent, world) {
        return Err(ExecutionRace {
            feedback: format!("The situation changed before you could act. {}", r.feedback),
        });
    }
    let arg = |p: &str| call.arg(p).unwrap_or_default().to_string();
    let id_of = |world: &WorldState, name: &str| {
        world
            .entity_by_name(name)
            .map(|e| e.id.clone())
            .expect("checked by preconditions")
    };
    let done = |feedback: String| {
        Ok(Execution {
            feedback,
            pending: false,
        })
    };

    match call.function.as_str() {
        "move_to" => {
            let target_name = arg("location");
            let target = world
                .resolve_target(&target_name)
                .expect("checked by preconditions");
            let state = world.agents.get_mut(&agent).expect("issuer exists");
            state.heading_target = Some(target);
            state.blocked_s = 0.0;
            state.pending = Some(PendingAction {
                call_id: Some(call.id.clone()),
                kind: PendingKind::Arrival {
                    target: target_name.clone(),
                },
            });
            Ok(Execution {
                feedback: format!("You are moving to the {target_name}."),
                pending: true,
            })
        }
        "pick_up" => {
            let name = arg("object");
            let id = id_of(world, &name);
            world.entities.get_mut(&id).expect("exists").location = Location::HeldBy(agent.clone());
            world.agents.get_mut(&agent).expect("issuer exists").holding = Some(id);
            done(format!("You picked up the {name}."))
        }
        "put_down" => {
            let name = arg("object");
            let id = id_of(world, &name);
            let surface = call.arg("surface").unwrap_or(GROUND).to_string();
            let state = world.agents.get_mut(&agent).expect("issuer exists");
            state.holding = None;
            let position = state.position.clone();
            if surface == GROUND {
                world.entities.get_mut(&id).expect("exists").location = Location::Ground(position);
                done(format!("You put the {name} down on the ground."))
            } else {
                let host = id_of(world, &surface);
                world.entities.get_mut(&id).expect("exists").location = Location::Inside(host);
                done(format!("You put the {name} down on the {surface}."))
            }
        }
        "open_door" => {
            let name = arg("door");
            let id = id_of(world, &name);
            let key = world
                .agent(&agent)
                .and_then(|a| a.holding.as_ref())
                .and_then(|h| world.entity(h))
                .map(|k| k.name.clone());
            let door = world.doors.get_mut(&id).expect("checked by preconditions");
            let was_locked = door.locked_by.take().is_some();
            door.open = true;
            door.timer_remaining = None;
            match (was_locked, key) {
                (true, Some(key)) => done(format!(
                    "You unlocked and opened the {name} with the {key}."
                )),
                _ => done(format!("You opened the {name}.")),
            }
        }
        "step_on_plate" => {
            let duration = world.config.door_open_s;
            let mut opened = Vec::new();
            for (id, door) in world.doors.iter_mut().filter(|(_, d)| d.timed) {
                door.open = true;
                door.timer_remaining = Some(duration);
                opened.push(id.clone());
            }
            world.plate_log.push(PlateEvent {
                plate: id_of(world, &arg("plate")),
                agent: agent.clone(),
                at: world.clock,
            });
            let doors: Vec<String> = opened.iter().map(|d| world.door_entity_name(d)).collect();
            if doors.is_empty() {
                done("You stepped on the pressure plate. Nothing happened.".to_string())
            } else {
                done(format!(
                    "You stepped on the pressure plate. The {} is open for {duration} seconds.",
                    doors.join(" and the ")
                ))
            }
        }
        "throw_away" => {
            let name = arg("object");
            let id = id_of(world, &name);
            let bin = world
                .entities
                .values()
                .find(|e| e.kind == EntityKind::TrashBin)
                .map(|e| (e.id.clone(), e.name.clone()))
                .expect("checked by preconditions");
            world.entities.get_mut(&id).expect("exists").location = Location::Inside(bin.0);
            world.agents.get_mut(&agent).expect("issuer exists").holding = None;
            done(format!("You threw the {name} into the {}.", bin.1))
        }
        "flip" => {
            let name = arg("object");
            let entity = id_of(world, &name);
            let expires_at = world.clock + world.config.flip_sync_window_s;
            let needed = world.config.flip_agents_required.saturating_sub(1);
            world.agents.get_mut(&agent).expect("issuer exists").pending = Some(PendingAction {
                call_id: Some(call.id.clone()),
                kind: PendingKind::Flip { entity, expires_at },
            });
            Ok(Execution {
                feedback: format!(
                    "You are ready to flip the {name}. It flips as soon as {needed} more robot{} next to it {} ready too.",
                    if needed == 1 { "" } else { "s" },
                    if needed == 1 { "is" } else { "are" },
                ),
                pending: true,
            })
        }
        other => Err(ExecutionRace {
            feedback: format!("There is no function called '{other}'."),
        }),
    }
}
