mod common;

use std::sync::Arc;

use common::{spawn, valid_calls};
use proptest::prelude::*;
use serde_json::json;
use teamsim_core::agent::{PromptTemplates, TurnStep};
use teamsim_core::backend::{ChatMessage, Role};
use teamsim_core::dispatch::{Controller, RouteStep};
use teamsim_core::world::{facts, Notice};
use teamsim_core::{
    registry_for, AbortSignal, AgentConfig, AgentCore, BackendError, BackendParams, Completion,
    CompletionKind, EventKind, Layer, Scene, SessionEvent, TaskRegistry, ToolCall, WorldState,
};

const MAX_CALLS: usize = 3;
const AGENT: &str = "Neptune";

#[derive(Debug, Clone)]
enum Op {
    Say(u8),
    ValidCall(u8),
    BadCall(u8),
    Text(bool),
    Fail,
    Step,
    Peer(u8),
    Abort,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => any::<u8>().prop_map(Op::Say),
        4 => any::<u8>().prop_map(Op::ValidCall),
        2 => any::<u8>().prop_map(Op::BadCall),
        1 => any::<bool>().prop_map(Op::Text),
        1 => Just(Op::Fail),
        4 => Just(Op::Step),
        2 => any::<u8>().prop_map(Op::Peer),
        1 => Just(Op::Abort),
    ]
}

fn completion(kind: CompletionKind) -> Result<Completion, BackendError> {
    Ok(Completion {
        kind,
        usage: None,
        latency: 0.5,
    })
}

fn peer_event(i: u8) -> SessionEvent {
    let agent = if i.is_multiple_of(2) {
        "Jupiter"
    } else {
        "Pluto"
    };
    let text = if i.is_multiple_of(3) {
        serde_json::Value::Null
    } else {
        json!("Done.")
    };
    SessionEvent {
        seq: 0,
        sim_time: 0.0,
        wall_time: String::new(),
        layer: Layer::Operational,
        kind: EventKind::AgentReply,
        agent: Some(agent.into()),
        payload: json!({"text": text, "instruction": "go", "actions": ["moved"]}),
    }
}

/// Tool calls per stretch between user messages.
fn calls_per_turn(messages: &[ChatMessage]) -> Vec<usize> {
    let mut out = vec![0];
    for m in messages {
        match m.role {
            Role::User => out.push(0),
            Role::Assistant if m.tool_call.is_some() => *out.last_mut().unwrap() += 1,
            _ => {}
        }
    }
    out
}

fn check_agent(core: &AgentCore) -> Result<(), TestCaseError> {
    let h = core.history();
    h.check().map_err(TestCaseError::fail)?;
    for n in calls_per_turn(h.messages()) {
        prop_assert!(n <= MAX_CALLS, "{n} tool calls in one turn");
    }
    for m in h.messages().iter().filter(|m| m.role == Role::Assistant) {
        if let Some(call) = &m.tool_call {
            prop_assert_eq!(&call.issuer, AGENT);
            prop_assert!(call.id.starts_with("call_Neptune_"), "{}", call.id);
        }
    }
    Ok(())
}

#[derive(Debug)]
enum Phase {
    Idle,
    Requesting,
    Awaiting(String),
}

struct Rig {
    world: WorldState,
    core: AgentCore,
    abort: AbortSignal,
    phase: Phase,
}

impl Rig {
    fn new() -> Self {
        let scene = Scene::builtin();
        let tasks = TaskRegistry::builtin(&scene);
        let world = spawn(4);
        let profile = world.agent(AGENT).unwrap().profile.clone();
        let registry = registry_for(&profile, tasks.get(4).unwrap(), &scene);
        let config = AgentConfig {
            max_tool_iterations: MAX_CALLS,
            ..AgentConfig::default()
        };
        let core = AgentCore::new(
            profile,
            registry,
            &world,
            Arc::new(PromptTemplates::builtin()),
            config,
        );
        Self {
            world,
            core,
            abort: AbortSignal::new(),
            phase: Phase::Idle,
        }
    }

    fn follow(&mut self, step: TurnStep) {
        self.phase = match step {
            TurnStep::Request(_) => Phase::Requesting,
            TurnStep::AwaitEffect { call_id } => Phase::Awaiting(call_id),
            TurnStep::Done(_) => Phase::Idle,
        };
    }

    fn complete(&mut self, result: Result<Completion, BackendError>) {
        if !matches!(self.phase, Phase::Requesting) {
            return;
        }
        let now = self.world.clock;
        let step = self
            .core
            .on_completion(result, &mut self.world, &self.abort, now);
        self.follow(step);
    }

    fn apply(&mut self, op: Op) {
        let now = self.world.clock;
        match op {
            Op::Say(i) => {
                if matches!(self.phase, Phase::Idle) {
                    let texts = [
                        "Get the yellow key.",
                        "Go to the user.",
                        "Neptune, open the red door.",
                    ];
                    self.core
                        .begin_turn(texts[i as usize % texts.len()], self.abort.epoch(), now);
                    self.phase = Phase::Requesting;
                }
            }
            Op::ValidCall(i) => {
                let calls = valid_calls(&self.world, AGENT);
                if let Some(call) = calls.get(i as usize % calls.len().max(1)) {
                    self.complete(completion(CompletionKind::ToolCall(call.clone())));
                }
            }
            Op::BadCall(i) => {
                let call = if i.is_multiple_of(2) {
                    ToolCall::new("x", "fly_to", &[("location", "moon")])
                } else {
                    ToolCall::new("x", "pick_up", &[("object", "blue key")])
                };
                self.complete(completion(CompletionKind::ToolCall(call)));
            }
            Op::Text(question) => {
                let text = if question { "Which key?" } else { "Done." };
                self.complete(completion(CompletionKind::Text(text.into())));
            }
            Op::Fail => self.complete(Err(BackendError::Unavailable {
                endpoint: "http://127.0.0.1:9".into(),
                reason: "refused".into(),
            })),
            Op::Step => {
                for notice in self.world.step(0.5) {
                    if let Notice::Settled {
                        call_id: Some(id),
                        success,
                        feedback,
                        ..
                    } = notice
                    {
                        if let Phase::Awaiting(open) = &self.phase {
                            if *open == id {
                                let at = self.world.clock;
                                if let Some(step) =
                                    self.core.on_settled(&id, success, &feedback, at)
                                {
                                    self.follow(step);
                                }
                            }
                        }
                    }
                }
                self.core.push_world_update(facts(&self.world));
            }
            Op::Peer(i) => self.core.receive_peer_log(&peer_event(i), now),
            Op::Abort => {
                self.abort.raise();
                self.core.abort(&mut self.world, now);
                self.phase = Phase::Idle;
            }
        }
    }
}

#[derive(Debug, Clone)]
enum RouteOp {
    Begin(u8),
    Dispatch(u8),
    WrongTool,
    Text,
    Fail,
    Note,
    Cancel,
}

fn route_op() -> impl Strategy<Value = RouteOp> {
    prop_oneof![
        3 => any::<u8>().prop_map(RouteOp::Begin),
        3 => any::<u8>().prop_map(RouteOp::Dispatch),
        1 => Just(RouteOp::WrongTool),
        1 => Just(RouteOp::Text),
        1 => Just(RouteOp::Fail),
        2 => Just(RouteOp::Note),
        1 => Just(RouteOp::Cancel),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn agent_history_stays_well_formed(ops in prop::collection::vec(op(), 1..80)) {
        let mut rig = Rig::new();
        for op in ops {
            rig.apply(op);
            check_agent(&rig.core)?;
            prop_assert_eq!(rig.core.busy(), !matches!(rig.phase, Phase::Idle));
        }
    }

    #[test]
    fn controller_history_stays_well_formed(ops in prop::collection::vec(route_op(), 1..60)) {
        let roster: Vec<String> = ["Jupiter", "Pluto", "Neptune"].map(String::from).to_vec();
        let mut c = Controller::new(
            roster.clone(),
            Arc::new(PromptTemplates::builtin()),
            "English",
            BackendParams::default(),
            200,
        );
        let mut t = 0.0;
        for op in ops {
            t += 0.1;
            let result = match op {
                RouteOp::Begin(i) => {
                    if !c.busy() {
                        c.begin_route(&format!("{}, come here.", roster[i as usize % 3]), t);
                    }
                    None
                }
                RouteOp::Dispatch(i) => {
                    let call = ToolCall {
                        id: "whatever".into(),
                        function: "dispatch".into(),
                        arguments: serde_json::from_value(json!({
                            "recipients": [roster[i as usize % 3], "Saturn"],
                            "instructions": {},
                            "rationale": "named",
                        })).unwrap(),
                        issuer: String::new(),
                    };
                    Some(completion(CompletionKind::ToolCall(call)))
                }
                RouteOp::WrongTool => Some(completion(CompletionKind::ToolCall(ToolCall::new("y", "move_to", &[("location", "user")])))),
                RouteOp::Text => Some(completion(CompletionKind::Text("Sure.".into()))),
                RouteOp::Fail => Some(Err(BackendError::Protocol { message: "bad".into(), raw: "{".into() })),
                RouteOp::Note => {
                    c.note("Pluto replied: Done.", t);
                    None
                }
                RouteOp::Cancel => {
                    c.cancel(t);
                    None
                }
            };
            if let Some(result) = result {
                if c.busy() {
                    match c.on_completion(result, t) {
                        RouteStep::Decided(d) => {
                            prop_assert!(!d.recipients.is_empty());
                            prop_assert!(d.recipients.iter().all(|r| roster.contains(r)));
                            prop_assert_eq!(d.dropped.clone(), vec!["Saturn".to_string()]);
                        }
                        RouteStep::Retry(req) => prop_assert_eq!(req.tool_choice.as_deref(), Some("dispatch")),
                        RouteStep::Failed(_) => prop_assert!(!c.busy()),
                    }
                }
            }
            let h = c.history();
            h.check().map_err(TestCaseError::fail)?;
            prop_assert!(h.open_call().is_none());
            for m in h.messages() {
                if let Some(call) = &m.tool_call {
                    prop_assert_eq!(call.function.as_str(), "dispatch");
                    prop_assert!(call.id.starts_with("call_controller_"));
                }
            }
        }
    }
}

#[test]
fn budget_ends_turn_after_max_calls() {
    let mut rig = Rig::new();
    rig.apply(Op::Say(0));
    for _ in 0..10 {
        rig.apply(Op::BadCall(1));
    }
    assert!(matches!(rig.phase, Phase::Idle));
    assert_eq!(
        calls_per_turn(rig.core.history().messages()),
        vec![0, MAX_CALLS]
    );
}
