//! Static map data: regions, the edges connecting them, door definitions,
//! entity placements and the agent roster. Loaded from a JSON fixture.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{self, Point};
use super::profile::AgentProfile;
use super::{EntityKind, Position};

const BUILTIN_SCENE: &str = include_str!("../../fixtures/scene.json");

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    /// Human-facing name; several regions may share one label.
    pub label: String,
    #[serde(with = "point_list")]
    pub polygon: Vec<Point>,
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        geometry::convex_contains(&self.polygon, p)
    }
}

/// A traversable boundary between two regions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub a: String,
    pub b: String,
    #[serde(with = "point_pair")]
    pub segment: [Point; 2],
    #[serde(default)]
    pub flying_only: bool,
    #[serde(default)]
    pub small_only: bool,
    #[serde(default)]
    pub door: Option<String>,
}

impl Edge {
    pub fn other(&self, region: &str) -> Option<&str> {
        if self.a == region {
            Some(&self.b)
        } else if self.b == region {
            Some(&self.a)
        } else {
            None
        }
    }

    pub fn midpoint(&self) -> Point {
        self.segment[0].lerp(self.segment[1], 0.5)
    }

    pub fn allows(&self, profile: &AgentProfile) -> bool {
        (!self.flying_only || profile.can_fly()) && (!self.small_only || profile.is_small())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoorSpec {
    pub id: String,
    pub color: Option<String>,
    /// Key color that unlocks the door, if it starts locked.
    pub locked_by: Option<String>,
    /// Timed doors open from a pressure plate and close on their own.
    pub timed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntitySpec {
    pub id: String,
    /// Canonical name, the only spelling accepted in function arguments.
    pub name: String,
    /// Noun phrase with article for descriptions.
    pub label: String,
    pub kind: EntityKind,
    #[serde(default)]
    pub at: Option<Position>,
    /// Container or surface the entity starts on.
    #[serde(default)]
    pub on: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub profile: AgentProfile,
    pub start: Position,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub goal_radius: f64,
    pub door_open_s: f64,
    /// How long a mover waits in front of a closed timed door before giving up.
    pub door_wait_s: f64,
    pub flip_sync_window_s: f64,
    pub flip_agents_required: usize,
}

/// One line of the scene layout paragraph. Either fixed text, or a region
/// sentence with an `empty` and a `filled` variant; `{contents}` expands to
/// the region's visible objects and `{door:<id>}` to a door's state word.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutLine {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default)]
    pub empty: Option<String>,
    #[serde(default)]
    pub filled: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub user_position: Position,
    pub config: WorldConfig,
    pub regions: Vec<Region>,
    pub edges: Vec<Edge>,
    pub doors: Vec<DoorSpec>,
    pub entities: Vec<EntitySpec>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub layout: Vec<LayoutLine>,
}

impl Scene {
    /// The map shipped with the crate.
    pub fn builtin() -> Arc<Scene> {
        Arc::new(Scene::from_json(BUILTIN_SCENE).expect("builtin scene fixture is valid"))
    }

    pub fn from_json(text: &str) -> Result<Scene, SceneError> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn entity(&self, id: &str) -> Option<&EntitySpec> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn door(&self, id: &str) -> Option<&DoorSpec> {
        self.doors.iter().find(|d| d.id == id)
    }

    pub fn agent(&self, name: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.profile.name == name)
    }

    pub fn roster(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.profile.name.clone()).collect()
    }

    pub fn region_label<'a>(&'a self, id: &'a str) -> &'a str {
        self.region(id).map(|r| r.label.as_str()).unwrap_or(id)
    }

    pub fn edges_of<'a>(&'a self, region: &'a str) -> impl Iterator<Item = (usize, &'a Edge)> + 'a {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.a == region || e.b == region)
    }

    pub fn position_valid(&self, p: &Position) -> bool {
        self.region(&p.region)
            .is_some_and(|r| r.contains(p.point()))
    }

    /// Regions an agent could ever enter from `start`, considering only its
    /// capabilities and the given edge filter (door states are the caller's
    /// concern).
    pub fn reachable_regions(
        &self,
        start: &str,
        profile: &AgentProfile,
        usable: impl Fn(&Edge) -> bool,
    ) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([start.to_string()]);
        let mut frontier = vec![start.to_string()];
        while let Some(region) = frontier.pop() {
            for (_, edge) in self.edges_of(&region) {
                if !edge.allows(profile) || !usable(edge) {
                    continue;
                }
                if let Some(next) = edge.other(&region) {
                    if seen.insert(next.to_string()) {
                        frontier.push(next.to_string());
                    }
                }
            }
        }
        seen
    }

    fn validate(&self) -> Result<(), SceneError> {
        let invalid = |msg: String| Err(SceneError::Invalid(msg));
        let mut ids = BTreeSet::new();
        for region in &self.regions {
            if !ids.insert(region.id.as_str()) {
                return invalid(format!("duplicate region '{}'", region.id));
            }
            if !geometry::is_convex(&region.polygon) {
                return invalid(format!("region '{}' is not a convex polygon", region.id));
            }
        }
        for edge in &self.edges {
            for end in [&edge.a, &edge.b] {
                let Some(region) = self.region(end) else {
                    return invalid(format!("edge '{}' names unknown region '{end}'", edge.id));
                };
                if !edge.segment.iter().all(|p| region.contains(*p)) {
                    return invalid(format!(
                        "edge '{}' does not lie on the boundary of '{end}'",
                        edge.id
                    ));
                }
            }
            if let Some(door) = &edge.door {
                if self.door(door).is_none() {
                    return invalid(format!("edge '{}' names unknown door '{door}'", edge.id));
                }
            }
        }
        let mut names = BTreeSet::new();
        let mut entity_ids = BTreeSet::new();
        for entity in &self.entities {
            if !entity_ids.insert(entity.id.as_str()) {
                return invalid(format!("duplicate entity id '{}'", entity.id));
            }
            if !names.insert(entity.name.as_str()) {
                return invalid(format!("duplicate entity name '{}'", entity.name));
            }
            match (&entity.at, &entity.on) {
                (Some(pos), None) => {
                    if !self.position_valid(pos) {
                        return invalid(format!("entity '{}' is outside its region", entity.id));
                    }
                }
                (None, Some(host)) => {
                    if self.entity(host).and_then(|h| h.at.as_ref()).is_none() {
                        return invalid(format!(
                            "entity '{}' rests on '{host}', which has no ground position",
                            entity.id
                        ));
                    }
                }
                _ => {
                    return invalid(format!(
                        "entity '{}' needs exactly one of 'at' and 'on'",
                        entity.id
                    ))
                }
            }
        }
        let mut agent_names = BTreeMap::new();
        for agent in &self.agents {
            let p = &agent.profile;
            if agent_names.insert(p.name.as_str(), ()).is_some() {
                return invalid(format!("duplicate agent '{}'", p.name));
            }
            if !(p.speed > 0.0 && p.reach_radius > 0.0) {
                return invalid(format!("agent '{}' needs positive speed and reach", p.name));
            }
            if !self.position_valid(&agent.start) {
                return invalid(format!("agent '{}' starts outside its region", p.name));
            }
        }
        if !self.position_valid(&self.user_position) {
            return invalid("user position is outside its region".into());
        }
        let c = &self.config;
        if !(c.goal_radius > 0.0 && c.door_open_s > 0.0 && c.door_wait_s >= 0.0) {
            return invalid("config values must be positive".into());
        }
        Ok(())
    }
}

mod point_list {
    use super::Point;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(points: &[Point], s: S) -> Result<S::Ok, S::Error> {
        points
            .iter()
            .map(|p| [p.x, p.y])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Point>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[x, y]| Point::new(x, y)).collect())
    }
}

mod point_pair {
    use super::Point;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(points: &[Point; 2], s: S) -> Result<S::Ok, S::Error> {
        [[points[0].x, points[0].y], [points[1].x, points[1].y]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Point; 2], D::Error> {
        let [[ax, ay], [bx, by]] = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok([Point::new(ax, ay), Point::new(bx, by)])
    }
}
