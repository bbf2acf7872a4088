//! Textual rendering of the world for LLM context.
//!
//! `describe` produces the full paragraph placed in every initial prompt;
//! `facts` breaks the dynamic part of the scene into keyed sentences so that
//! updates can be sent as differences.

use std::collections::BTreeMap;

use super::{join_names, Entity, EntityKind, Location, Position, WorldState};

/// Keyed, stable sentences about the dynamic state of the world.
pub type Facts = BTreeMap<String, String>;

/// Describes the world, optionally from one agent's point of view (that
/// agent is addressed in the second person).
pub fn describe(world: &WorldState, viewpoint: Option<&str>) -> String {
    let mut out: Vec<String> = Vec::new();
    let scene = world.scene();
    for line in &scene.layout {
        if let Some(text) = &line.text {
            out.push(text.clone());
            continue;
        }
        let Some(region) = &line.region else { continue };
        let contents: Vec<String> = world
            .entities
            .values()
            .filter(|e| on_ground_in(e, region) && !e.kind.is_structural())
            .map(|e| phrase(world, e))
            .collect();
        let template = if contents.is_empty() {
            &line.empty
        } else {
            &line.filled
        };
        if let Some(t) = template {
            let text = t.replace("{contents}", &join_phrases(&contents));
            out.push(expand_doors(world, &text));
        }
    }

    let layout_regions: Vec<&str> = scene
        .layout
        .iter()
        .filter_map(|l| l.region.as_deref())
        .collect();
    let main: Vec<String> = world
        .entities
        .values()
        .filter(|e| match &e.location {
            Location::Ground(p) => !layout_regions.contains(&p.region.as_str()),
            _ => false,
        })
        .filter(|e| !e.kind.is_structural())
        .map(|e| phrase(world, e))
        .collect();
    if !main.is_empty() {
        out.push(format!(
            "In the main room there is {}.",
            join_phrases(&main)
        ));
    }

    for (id, door) in &world.doors {
        let name = world.door_entity_name(id);
        let sentence = if door.open {
            match door.timer_remaining {
                Some(t) => format!("The {name} is open and closes in {t:.1} seconds."),
                None => format!("The {name} is open."),
            }
        } else if door.locked_by.is_some() {
            format!("The {name} is locked.")
        } else {
            format!("The {name} is closed.")
        };
        out.push(sentence);
    }
    for e in world.entities.values() {
        if e.flipped {
            out.push(format!("The {} has been flipped.", e.name));
        }
        if e.broken {
            out.push(format!("The {} is broken.", e.name));
        }
    }

    for name in world.roster() {
        let agent = &world.agents[&name];
        let you = viewpoint == Some(name.as_str());
        let region = scene.region_label(&agent.position.region);
        let near = nearest_landmark(world, &agent.position)
            .map(|n| format!(" near the {n}"))
            .unwrap_or_default();
        let traits = agent.profile.traits();
        if you {
            out.push(format!("You ({traits}) are in the {region}{near}."));
        } else {
            out.push(format!("{name} ({traits}) is in the {region}{near}."));
        }
        if let Some(held) = agent.holding.as_ref().and_then(|h| world.entities.get(h)) {
            if you {
                out.push(format!("You are holding the {}.", held.name));
            } else {
                out.push(format!("{name} is holding the {}.", held.name));
            }
        }
    }
    out.push(format!(
        "The user watches from a fixed position at the front of the {}.",
        scene.region_label(&world.user_position().region)
    ));
    out.join(" ")
}

/// The dynamic state as keyed sentences: doors, movable objects, flipped
/// furniture and agent whereabouts.
pub fn facts(world: &WorldState) -> Facts {
    let mut facts = Facts::new();
    let scene = world.scene();
    for (id, door) in &world.doors {
        let name = world.door_entity_name(id);
        let state = if door.open {
            "open"
        } else if door.locked_by.is_some() {
            "locked"
        } else {
            "closed"
        };
        facts.insert(format!("door:{id}"), format!("The {name} is {state}."));
    }
    for e in world.entities.values() {
        if e.kind.is_surface() && e.flipped {
            facts.insert(
                format!("flipped:{}", e.id),
                format!("The {} has been flipped.", e.name),
            );
        }
        if !e.kind.is_movable() {
            continue;
        }
        let text = match &e.location {
            Location::Ground(p) => {
                let near = if p.distance(world.user_position()) <= world.config.goal_radius {
                    " near the user".to_string()
                } else {
                    String::new()
                };
                format!(
                    "The {} lies on the ground in the {}{near}.",
                    e.name,
                    scene.region_label(&p.region)
                )
            }
            Location::HeldBy(agent) => format!("{agent} is holding the {}.", e.name),
            Location::Inside(host) => {
                let host = world
                    .entities
                    .get(host)
                    .map(|h| h.name.as_str())
                    .unwrap_or(host);
                if host == "trash bin" {
                    format!("The {} is in the {host}.", e.name)
                } else {
                    format!("The {} is on the {host}.", e.name)
                }
            }
            Location::Destroyed if e.broken => format!("The {} is broken.", e.name),
            Location::Destroyed => format!("The {} is gone.", e.name),
        };
        facts.insert(format!("entity:{}", e.id), text);
    }
    for (name, agent) in &world.agents {
        let region = scene.region_label(&agent.position.region);
        let near = nearest_landmark(world, &agent.position)
            .map(|n| format!(" near the {n}"))
            .unwrap_or_default();
        facts.insert(
            format!("agent:{name}"),
            format!("{name} is in the {region}{near}."),
        );
    }
    facts
}

fn on_ground_in(e: &Entity, region: &str) -> bool {
    matches!(&e.location, Location::Ground(p) if p.region == region)
}

/// Noun phrase for an entity including anything resting on or inside it.
fn phrase(world: &WorldState, e: &Entity) -> String {
    let inner: Vec<String> = world
        .contents_of(&e.id)
        .iter()
        .map(|c| phrase(world, c))
        .collect();
    if inner.is_empty() {
        e.label.clone()
    } else if e.kind == EntityKind::TrashBin {
        format!("{} containing {}", e.label, join_phrases(&inner))
    } else {
        format!("{} with {} on it", e.label, join_phrases(&inner))
    }
}

fn join_phrases(items: &[String]) -> String {
    let refs: Vec<&str> = items.iter().map(String::as_str).collect();
    join_names(&refs)
}

/// Replaces `{door:<id>}` with the door's state word. Doors that are not part
/// of the current task show their initial state.
fn expand_doors(world: &WorldState, text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{door:") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 6..];
        let Some(end) = after.find('}') else {
            out.push_str(&rest[start..]);
            return out;
        };
        let id = &after[..end];
        let word = match world.doors.get(id) {
            Some(d) if d.open => "open",
            Some(d) if d.locked_by.is_some() => "locked",
            Some(_) => "closed",
            None => match world.scene().door(id) {
                Some(spec) if spec.locked_by.is_some() => "locked",
                _ => "closed",
            },
        };
        out.push_str(word);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Closest visible entity or the user within goal radius of a position.
fn nearest_landmark(world: &WorldState, at: &Position) -> Option<String> {
    let radius = world.config.goal_radius;
    let mut best: Option<(f64, String)> = None;
    for e in world.entities.values() {
        let Location::Ground(p) = &e.location else {
            continue;
        };
        let d = p.distance(at);
        if d <= radius && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, e.name.clone()));
        }
    }
    let d_user = world.user_position().distance(at);
    if d_user <= radius && best.as_ref().is_none_or(|(bd, _)| d_user < *bd) {
        best = Some((d_user, "user".to_string()));
    }
    best.map(|(_, n)| n)
}
