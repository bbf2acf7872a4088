//! Deterministic 2D world engine: scene construction, kinematics, object
//! possession, doors with timers, and the textual scene description used as
//! LLM context.

mod describe;
pub mod geometry;
pub mod nav;
mod profile;
mod scene;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::TaskSpec;
use geometry::{Point, EPS};
use nav::PlanError;

pub use describe::{describe, facts, Facts};
pub use profile::{AgentProfile, Locomotion, Size, Strength};
pub use scene::{
    AgentSpec, DoorSpec, Edge, EntitySpec, LayoutLine, Region, Scene, SceneError, WorldConfig,
};

/// Name accepted as a movement target for the operator's fixed position.
pub const USER_LOCATION: &str = "user";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("not found: {0}")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub region: String,
}

impl Position {
    pub fn new(x: f64, y: f64, region: &str) -> Self {
        Self {
            x,
            y,
            region: region.to_string(),
        }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn distance(&self, other: &Position) -> f64 {
        self.point().distance(other.point())
    }

    fn set_point(&mut self, p: Point) {
        self.x = p.x;
        self.y = p.y;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EntityKind {
    Key { color: String },
    Door { color: String },
    GlassDoor,
    PressurePlate,
    Candle,
    Fridge,
    Dumbbell,
    Plate,
    TrashBin,
    Bed,
    Vase,
    Chair,
    Chest,
    ElevatedArea,
}

impl EntityKind {
    pub fn is_movable(&self) -> bool {
        matches!(
            self,
            EntityKind::Key { .. }
                | EntityKind::Candle
                | EntityKind::Dumbbell
                | EntityKind::Plate
                | EntityKind::Vase
        )
    }

    /// Furniture that other objects can be put on.
    pub fn is_surface(&self) -> bool {
        matches!(
            self,
            EntityKind::Bed | EntityKind::Chest | EntityKind::Chair | EntityKind::Fridge
        )
    }

    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            EntityKind::Door { .. } | EntityKind::GlassDoor | EntityKind::ElevatedArea
        )
    }

    pub fn weight(&self) -> Weight {
        match self {
            EntityKind::Dumbbell => Weight::Heavy,
            _ => Weight::Light,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    Light,
    Heavy,
}

/// Where an entity is. Exactly one variant holds at any time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Ground(Position),
    HeldBy(String),
    /// Inside a container or resting on a surface entity.
    Inside(String),
    Destroyed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub label: String,
    pub kind: EntityKind,
    pub location: Location,
    #[serde(default)]
    pub flipped: bool,
    #[serde(default)]
    pub broken: bool,
}

impl Entity {
    pub fn weight(&self) -> Weight {
        self.kind.weight()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorState {
    pub open: bool,
    pub locked_by: Option<String>,
    /// Seconds until a timed door closes again; present only while open.
    pub timer_remaining: Option<f64>,
    pub timed: bool,
}

/// A durative action the agent is carrying out for an open tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingAction {
    pub call_id: Option<String>,
    pub kind: PendingKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingKind {
    /// Travelling to a named target.
    Arrival { target: String },
    /// Readiness token for a joint flip; expires at `expires_at`.
    Flip { entity: String, expires_at: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub profile: AgentProfile,
    pub position: Position,
    pub heading_target: Option<Position>,
    pub holding: Option<String>,
    pub pending: Option<PendingAction>,
    /// Time spent stalled in front of a closed timed door.
    #[serde(default)]
    pub blocked_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateEvent {
    pub plate: String,
    pub agent: String,
    pub at: f64,
}

/// Something that happened during a step that its participants must hear about.
#[derive(Debug, Clone, PartialEq)]
pub enum Notice {
    /// A durative action finished, successfully or not.
    Settled {
        agent: String,
        call_id: Option<String>,
        success: bool,
        feedback: String,
    },
    DoorClosed {
        door: String,
    },
}

/// The complete simulated scene. Cloning is cheap enough to hand out
/// snapshots; the static map is shared.
#[derive(Debug, Clone, Serialize)]
pub struct WorldState {
    #[serde(skip)]
    scene: Arc<Scene>,
    pub config: WorldConfig,
    pub task_id: Option<u8>,
    pub clock: f64,
    pub entities: BTreeMap<String, Entity>,
    pub agents: BTreeMap<String, AgentState>,
    pub doors: BTreeMap<String, DoorState>,
    pub plate_log: Vec<PlateEvent>,
}

impl PartialEq for WorldState {
    fn eq(&self, other: &Self) -> bool {
        self.task_id == other.task_id
            && self.clock == other.clock
            && self.entities == other.entities
            && self.agents == other.agents
            && self.doors == other.doors
            && self.plate_log == other.plate_log
    }
}

impl WorldState {
    /// Builds the world for a task: all agents at their start poses plus
    /// exactly the task's entity subset.
    pub fn spawn(scene: Arc<Scene>, task: &TaskSpec) -> Result<Self, WorldError> {
        let mut entities = BTreeMap::new();
        let mut doors = BTreeMap::new();
        for id in &task.entity_subset {
            let spec = scene.entity(id).ok_or_else(|| {
                WorldError::NotFound(format!("entity '{id}' in task {}", task.id))
            })?;
            let location = match (&spec.at, &spec.on) {
                (Some(pos), _) => Location::Ground(pos.clone()),
                (None, Some(host)) => {
                    if !task.entity_subset.contains(host) {
                        return Err(WorldError::NotFound(format!(
                            "'{id}' rests on '{host}', which task {} does not include",
                            task.id
                        )));
                    }
                    Location::Inside(host.clone())
                }
                (None, None) => unreachable!("scene validation guarantees a placement"),
            };
            entities.insert(
                id.clone(),
                Entity {
                    id: id.clone(),
                    name: spec.name.clone(),
                    label: spec.label.clone(),
                    kind: spec.kind.clone(),
                    location,
                    flipped: false,
                    broken: false,
                },
            );
            if let Some(door) = scene.door(id) {
                doors.insert(
                    id.clone(),
                    DoorState {
                        open: false,
                        locked_by: door.locked_by.clone(),
                        timer_remaining: None,
                        timed: door.timed,
                    },
                );
            }
        }
        let agents = scene
            .agents
            .iter()
            .map(|a| {
                (
                    a.profile.name.clone(),
                    AgentState {
                        profile: a.profile.clone(),
                        position: a.start.clone(),
                        heading_target: None,
                        holding: None,
                        pending: None,
                        blocked_s: 0.0,
                    },
                )
            })
            .collect();
        Ok(WorldState {
            config: scene.config.clone(),
            scene,
            task_id: Some(task.id),
            clock: 0.0,
            entities,
            agents,
            doors,
            plate_log: Vec::new(),
        })
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    /// Agent names in roster order.
    pub fn roster(&self) -> Vec<String> {
        self.scene
            .agents
            .iter()
            .map(|a| a.profile.name.clone())
            .filter(|n| self.agents.contains_key(n))
            .collect()
    }

    pub fn agent(&self, name: &str) -> Option<&AgentState> {
        self.agents.get(name)
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entity_by_name(&self, name: &str) -> Option<&Entity> {
        self.entities.values().find(|e| e.name == name)
    }

    pub fn user_position(&self) -> &Position {
        &self.scene.user_position
    }

    /// Current position of an entity, following holders and containers.
    pub fn entity_position(&self, id: &str) -> Option<Position> {
        let mut current = self.entities.get(id)?;
        for _ in 0..=self.entities.len() {
            match &current.location {
                Location::Ground(p) => return Some(p.clone()),
                Location::HeldBy(agent) => {
                    return self.agents.get(agent).map(|a| a.position.clone())
                }
                Location::Inside(host) => current = self.entities.get(host)?,
                Location::Destroyed => return None,
            }
        }
        None
    }

    /// Resolves a movement target name: an entity's canonical name or the
    /// user's fixed position.
    pub fn resolve_target(&self, name: &str) -> Option<Position> {
        if name == USER_LOCATION {
            return Some(self.scene.user_position.clone());
        }
        let entity = self.entity_by_name(name)?;
        self.entity_position(&entity.id)
    }

    pub fn distance_to_entity(&self, agent: &str, entity_id: &str) -> Option<f64> {
        let a = self.agents.get(agent)?;
        Some(a.position.distance(&self.entity_position(entity_id)?))
    }

    pub fn contents_of(&self, host: &str) -> Vec<&Entity> {
        self.entities
            .values()
            .filter(|e| matches!(&e.location, Location::Inside(h) if h == host))
            .collect()
    }

    pub fn door_entity_name(&self, door: &str) -> String {
        self.entities
            .get(door)
            .map(|e| e.name.clone())
            .or_else(|| self.scene.entity(door).map(|e| e.name.clone()))
            .unwrap_or_else(|| door.to_string())
    }

    /// Stops an agent where it stands and drops any durative action.
    /// Returns the call id of the dropped action, if there was one.
    pub fn halt(&mut self, agent: &str) -> Option<String> {
        let state = self.agents.get_mut(agent)?;
        state.heading_target = None;
        state.blocked_s = 0.0;
        state.pending.take().and_then(|p| p.call_id)
    }

    /// Advances the simulation by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> Vec<Notice> {
        assert!(dt > 0.0, "step needs a positive dt");
        let mut notices = Vec::new();
        let names: Vec<String> = self.agents.keys().cloned().collect();
        for name in &names {
            if let Some(n) = self.move_agent(name, dt) {
                notices.push(n);
            }
        }
        self.clock += dt;
        notices.extend(self.resolve_flips());
        for (id, door) in self.doors.iter_mut() {
            if let Some(t) = door.timer_remaining {
                let left = t - dt;
                if left <= EPS {
                    door.open = false;
                    door.timer_remaining = None;
                    notices.push(Notice::DoorClosed { door: id.clone() });
                } else {
                    door.timer_remaining = Some(left);
                }
            }
        }
        notices
    }

    fn move_agent(&mut self, name: &str, dt: f64) -> Option<Notice> {
        let agent = self.agents.get(name)?;
        let target = agent.heading_target.clone()?;
        let target_name = match &agent.pending {
            Some(PendingAction {
                kind: PendingKind::Arrival { target },
                ..
            }) => target.clone(),
            _ => "destination".to_string(),
        };
        let route = nav::plan(
            &self.scene,
            &agent.position,
            &target,
            &agent.profile,
            &self.doors,
        );
        let route = match route {
            Ok(route) => route,
            Err(err) => {
                let reason = match err {
                    PlanError::Door(door) => {
                        let state = if self.doors.get(&door).is_some_and(|d| d.locked_by.is_some())
                        {
                            "locked"
                        } else {
                            "closed"
                        };
                        format!("the {} is {state}", self.door_entity_name(&door))
                    }
                    PlanError::Unreachable => "there is no way for you to get there".to_string(),
                };
                return Some(self.fail_motion(name, &target_name, &reason));
            }
        };

        let state = self.agents.get_mut(name).expect("agent exists");
        let mut budget = state.profile.speed * dt;
        let mut pos = state.position.clone();
        let mut waiting_at = None;
        for leg in &route.legs {
            let d = pos.point().distance(leg.to);
            if d > budget {
                let p = pos.point().advance(leg.to, budget);
                pos.set_point(p);
                break;
            }
            budget -= d;
            pos.set_point(leg.to);
            if let Some(door) = &leg.wait_door {
                waiting_at = Some(door.clone());
                break;
            }
            pos.region = leg.region_after.clone();
        }
        state.position = pos;

        if let Some(door) = waiting_at {
            state.blocked_s += dt;
            if state.blocked_s + EPS >= self.config.door_wait_s {
                let reason = format!("the {} stayed closed", self.door_entity_name(&door));
                return Some(self.fail_motion(name, &target_name, &reason));
            }
            return None;
        }
        state.blocked_s = 0.0;
        if state.position.distance(&target) <= EPS && state.position.region == target.region {
            state.position = target;
            state.heading_target = None;
            let call_id = state.pending.take().and_then(|p| p.call_id);
            let carrying = state
                .holding
                .as_ref()
                .and_then(|h| self.entities.get(h))
                .map(|e| format!("the {}", e.name))
                .unwrap_or_else(|| "nothing".to_string());
            return Some(Notice::Settled {
                agent: name.to_string(),
                call_id,
                success: true,
                feedback: format!("You arrived at the {target_name}, carrying {carrying}."),
            });
        }
        None
    }

    fn fail_motion(&mut self, agent: &str, target: &str, reason: &str) -> Notice {
        let call_id = self.halt(agent);
        Notice::Settled {
            agent: agent.to_string(),
            call_id,
            success: false,
            feedback: format!("You could not reach the {target}: {reason}."),
        }
    }

    fn resolve_flips(&mut self) -> Vec<Notice> {
        let mut notices = Vec::new();
        let mut by_entity: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (name, agent) in &self.agents {
            if let Some(PendingAction {
                kind: PendingKind::Flip { entity, expires_at },
                ..
            }) = &agent.pending
            {
                let in_reach = self
                    .distance_to_entity(name, entity)
                    .is_some_and(|d| d <= agent.profile.reach_radius + EPS);
                if *expires_at > self.clock - EPS && in_reach {
                    by_entity
                        .entry(entity.clone())
                        .or_default()
                        .push(name.clone());
                }
            }
        }
        for (entity_id, ready) in by_entity {
            if ready.len() < self.config.flip_agents_required {
                continue;
            }
            let Some(host_pos) = self.entity_position(&entity_id) else {
                continue;
            };
            let mut broke = Vec::new();
            for item in self
                .contents_of(&entity_id)
                .iter()
                .map(|e| e.id.clone())
                .collect::<Vec<_>>()
            {
                let e = self.entities.get_mut(&item).expect("listed entity");
                if e.kind == EntityKind::Vase {
                    e.broken = true;
                    e.location = Location::Destroyed;
                    broke.push(e.name.clone());
                } else {
                    e.location = Location::Ground(host_pos.clone());
                }
            }
            let bed = self
                .entities
                .get_mut(&entity_id)
                .expect("flip target exists");
            bed.flipped = true;
            let bed_name = bed.name.clone();
            for agent in &ready {
                let partners: Vec<&str> = ready
                    .iter()
                    .filter(|a| *a != agent)
                    .map(String::as_str)
                    .collect();
                let mut feedback = format!(
                    "You flipped the {bed_name} together with {}.",
                    join_names(&partners)
                );
                for b in &broke {
                    feedback.push_str(&format!(" The {b} fell off and broke."));
                }
                let call_id = self
                    .agents
                    .get_mut(agent)
                    .and_then(|a| a.pending.take())
                    .and_then(|p| p.call_id);
                notices.push(Notice::Settled {
                    agent: agent.clone(),
                    call_id,
                    success: true,
                    feedback,
                });
            }
        }
        let clock = self.clock;
        for (name, agent) in self.agents.iter_mut() {
            if let Some(PendingAction {
                kind: PendingKind::Flip { entity, expires_at },
                call_id,
            }) = &agent.pending
            {
                if clock + EPS >= *expires_at {
                    let feedback = format!(
                        "Nobody joined you in time, so the {} was not flipped.",
                        self.entities
                            .get(entity)
                            .map(|e| e.name.as_str())
                            .unwrap_or(entity)
                    );
                    notices.push(Notice::Settled {
                        agent: name.clone(),
                        call_id: call_id.clone(),
                        success: false,
                        feedback,
                    });
                    agent.pending = None;
                }
            }
        }
        notices
    }

    /// Checks the structural invariants: single location per entity,
    /// consistent holdings, valid positions and timer ranges.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (name, agent) in &self.agents {
            if !self.scene.position_valid(&agent.position) {
                return Err(format!(
                    "{name} is outside region {}",
                    agent.position.region
                ));
            }
            if let Some(held) = &agent.holding {
                match self.entities.get(held).map(|e| &e.location) {
                    Some(Location::HeldBy(holder)) if holder == name => {}
                    other => return Err(format!("{name} holds {held}, but it is at {other:?}")),
                }
            }
        }
        for (id, entity) in &self.entities {
            match &entity.location {
                Location::Ground(p) => {
                    if !self.scene.position_valid(p) {
                        return Err(format!("{id} is outside region {}", p.region));
                    }
                }
                Location::HeldBy(agent) => {
                    if self.agents.get(agent).and_then(|a| a.holding.as_deref())
                        != Some(id.as_str())
                    {
                        return Err(format!("{id} claims to be held by {agent}"));
                    }
                }
                Location::Inside(host) => match self.entities.get(host) {
                    Some(h) if h.location != Location::Destroyed => {}
                    _ => return Err(format!("{id} is inside missing host {host}")),
                },
                Location::Destroyed => {}
            }
        }
        for (id, door) in &self.doors {
            if let Some(t) = door.timer_remaining {
                if !(0.0..=self.config.door_open_s + EPS).contains(&t) || !door.open {
                    return Err(format!("door {id} has timer {t} while open={}", door.open));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn join_names(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

#[cfg(test)]
mod tests;
