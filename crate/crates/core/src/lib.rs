//! Simulation and orchestration core for a team of three LLM-driven robot
//! agents: world engine, action functions, tasks, chat-completion backends,
//! agent cores, the routing controller and the session service.

pub mod actions;
pub mod agent;
pub mod backend;
pub mod dispatch;
pub mod events;
pub mod session;
pub mod tasks;
pub mod world;

pub use actions::{
    registry_for, FunctionDescriptor, Registry, ToolCall, ValidationResult, Verdict,
};
pub use agent::{AbortSignal, AgentConfig, AgentCore, AgentHistory, Terminal, TurnOutcome};
pub use backend::{
    Backend, BackendError, BackendParams, Completion, CompletionKind, CompletionRequest,
    ScriptedBackend,
};
pub use dispatch::{Controller, RoutingDecision, RoutingError};
pub use events::{EventKind, Layer, SessionEvent};
pub use session::{Orchestrator, Pacing, SessionConfig, SessionError, SessionHandle};
pub use tasks::{goal_satisfied, GoalClause, TaskRegistry, TaskSpec};
pub use world::{describe, AgentProfile, Position, Scene, WorldState};
