//! The seven tasks: entity subsets, goal predicates and previews.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Location, Scene, WorldError, WorldState};

const BUILTIN_TASKS: &str = include_str!("../fixtures/tasks.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("unknown task id {0}")]
    NotFound(u8),
    #[error("world was spawned for task {world:?}, not task {task}")]
    ContractViolation { task: u8, world: Option<u8> },
    #[error("task registry: {0}")]
    Registry(String),
}

/// One conjunct of a goal predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalClause {
    Near {
        agent: String,
        entity: String,
    },
    Holding {
        agent: String,
        entity: String,
    },
    Inside {
        entity: String,
        host: String,
    },
    DoorOpen {
        door: String,
    },
    Flipped {
        entity: String,
    },
    Intact {
        entity: String,
    },
    InRegion {
        agent: String,
        region: String,
    },
    /// The agent stepped on the pressure plate at some point in this run.
    PlateTriggeredBy {
        agent: String,
    },
    /// The entity lies on the ground within goal radius of the user.
    DeliveredNearUser {
        entity: String,
    },
}

impl GoalClause {
    pub fn holds(&self, world: &WorldState) -> bool {
        let radius = world.config.goal_radius;
        match self {
            GoalClause::Near { agent, entity } => world
                .distance_to_entity(agent, entity)
                .is_some_and(|d| d <= radius),
            GoalClause::Holding { agent, entity } => world
                .agent(agent)
                .is_some_and(|a| a.holding.as_deref() == Some(entity)),
            GoalClause::Inside { entity, host } => world
                .entity(entity)
                .is_some_and(|e| matches!(&e.location, Location::Inside(h) if h == host)),
            GoalClause::DoorOpen { door } => world.doors.get(door).is_some_and(|d| d.open),
            GoalClause::Flipped { entity } => world.entity(entity).is_some_and(|e| e.flipped),
            GoalClause::Intact { entity } => world.entity(entity).is_some_and(|e| !e.broken),
            GoalClause::InRegion { agent, region } => world
                .agent(agent)
                .is_some_and(|a| &a.position.region == region),
            GoalClause::PlateTriggeredBy { agent } => {
                world.plate_log.iter().any(|p| &p.agent == agent)
            }
            GoalClause::DeliveredNearUser { entity } => world.entity(entity).is_some_and(|e| {
                matches!(&e.location, Location::Ground(p) if p.distance(world.user_position()) <= radius)
            }),
        }
    }

    fn references(&self) -> (Vec<&str>, Vec<&str>) {
        match self {
            GoalClause::Near { agent, entity } | GoalClause::Holding { agent, entity } => {
                (vec![agent], vec![entity])
            }
            GoalClause::Inside { entity, host } => (vec![], vec![entity, host]),
            GoalClause::DoorOpen { door: entity }
            | GoalClause::Flipped { entity }
            | GoalClause::Intact { entity }
            | GoalClause::DeliveredNearUser { entity } => (vec![], vec![entity]),
            GoalClause::InRegion { agent, .. } | GoalClause::PlateTriggeredBy { agent } => {
                (vec![agent], vec![])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u8,
    pub title: String,
    pub entity_subset: Vec<String>,
    /// Conjunction of clauses.
    pub goal: Vec<GoalClause>,
    pub preview: String,
    #[serde(default)]
    pub preview_image: Option<String>,
    pub requires_cooperation: bool,
}

/// The immutable task registry.
#[derive(Debug, Clone)]
pub struct TaskRegistry {
    tasks: Vec<TaskSpec>,
}

impl TaskRegistry {
    pub fn builtin(scene: &Scene) -> Self {
        Self::from_json(BUILTIN_TASKS, scene).expect("builtin task fixture is valid")
    }

    pub fn from_json(text: &str, scene: &Scene) -> Result<Self, TaskError> {
        let mut tasks: Vec<TaskSpec> =
            serde_json::from_str(text).map_err(|e| TaskError::Registry(e.to_string()))?;
        tasks.sort_by_key(|t| t.id);
        let ids: Vec<u8> = tasks.iter().map(|t| t.id).collect();
        if ids != (1..=7).collect::<Vec<u8>>() {
            return Err(TaskError::Registry(format!(
                "task ids must be 1..7 exactly once, got {ids:?}"
            )));
        }
        for task in &tasks {
            for id in &task.entity_subset {
                if scene.entity(id).is_none() {
                    return Err(TaskError::Registry(format!(
                        "task {}: unknown entity '{id}'",
                        task.id
                    )));
                }
            }
            for clause in &task.goal {
                let (agents, entities) = clause.references();
                if let Some(a) = agents.iter().find(|a| scene.agent(a).is_none()) {
                    return Err(TaskError::Registry(format!(
                        "task {}: unknown agent '{a}'",
                        task.id
                    )));
                }
                if let Some(e) = entities
                    .iter()
                    .find(|e| !task.entity_subset.iter().any(|s| s == *e))
                {
                    return Err(TaskError::Registry(format!(
                        "task {}: goal references '{e}' outside the entity subset",
                        task.id
                    )));
                }
            }
        }
        Ok(Self { tasks })
    }

    pub fn list(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn get(&self, id: u8) -> Result<&TaskSpec, TaskError> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or(TaskError::NotFound(id))
    }

    pub fn spawn(&self, scene: Arc<Scene>, id: u8) -> Result<WorldState, TaskError> {
        let task = self.get(id)?;
        WorldState::spawn(scene, task).map_err(|WorldError::NotFound(msg)| TaskError::Registry(msg))
    }
}

/// Evaluates a task's goal. Pure: the world is only read.
pub fn goal_satisfied(task: &TaskSpec, world: &WorldState) -> Result<bool, TaskError> {
    if world.task_id != Some(task.id) {
        return Err(TaskError::ContractViolation {
            task: task.id,
            world: world.task_id,
        });
    }
    Ok(task.goal.iter().all(|c| c.holds(world)))
}

/// True when the goal can no longer be reached no matter what happens next.
/// Only sticky facts are considered: broken objects stay broken.
pub fn goal_unreachable(task: &TaskSpec, world: &WorldState) -> bool {
    task.goal.iter().any(|c| match c {
        GoalClause::Intact { entity } => world.entity(entity).is_some_and(|e| e.broken),
        _ => false,
    })
}
