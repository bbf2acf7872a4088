//! One conversational core per robot: its prompt and history, the
//! instruction loop over backend completions, peer logs and world updates.

mod history;
mod prompt;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::actions::{execute, validate, Registry, ToolCall};
use crate::backend::{
    Backend, BackendError, BackendParams, Completion, CompletionKind, CompletionRequest,
};
use crate::events::{Draft, EventKind, SessionEvent};
use crate::world::{facts, AgentProfile, Facts, Notice, WorldState};

pub use history::{check_messages, AgentHistory};
pub use prompt::{
    agent_system_prompt, controller_system_prompt, english_list, render, PromptTemplates,
};

/// Shared emergency-stop counter. Raising it invalidates every turn started
/// before.
#[derive(Debug, Clone, Default)]
pub struct AbortSignal(Arc<AtomicU64>);

impl AbortSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn epoch(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    pub fn raise(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Replied,
    ClarificationRequested,
    StepBudgetExhausted,
    Aborted,
    BackendError,
}

impl Terminal {
    pub fn as_str(self) -> &'static str {
        match self {
            Terminal::Replied => "replied",
            Terminal::ClarificationRequested => "clarification_requested",
            Terminal::StepBudgetExhausted => "step_budget_exhausted",
            Terminal::Aborted => "aborted",
            Terminal::BackendError => "backend_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub agent: String,
    pub events: Vec<Draft>,
    pub terminal: Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_tool_iterations: usize,
    /// Most messages sent per request, briefing included.
    pub context_cap: usize,
    pub language: String,
    pub params: BackendParams,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_tool_iterations: 10,
            context_cap: 200,
            language: "English".to_string(),
            params: BackendParams::default(),
        }
    }
}

/// What the driver of a turn must do next.
#[derive(Debug, Clone, PartialEq)]
pub enum TurnStep {
    /// Ask the backend.
    Request(CompletionRequest),
    /// A durative action is running; call `on_settled` when it finishes.
    AwaitEffect {
        call_id: String,
    },
    Done(TurnOutcome),
}

#[derive(Debug, Clone)]
struct Turn {
    epoch: u64,
    instruction: String,
    tool_calls: usize,
    executed: usize,
    actions: Vec<String>,
    events: Vec<Draft>,
    awaiting: Option<ToolCall>,
}

#[derive(Debug, Clone)]
pub struct AgentCore {
    pub profile: AgentProfile,
    pub registry: Registry,
    pub config: AgentConfig,
    history: AgentHistory,
    templates: Arc<PromptTemplates>,
    call_seq: u64,
    turn: Option<Turn>,
}

impl AgentCore {
    pub fn new(
        profile: AgentProfile,
        registry: Registry,
        world: &WorldState,
        templates: Arc<PromptTemplates>,
        config: AgentConfig,
    ) -> Self {
        let history = build_initial_prompt(&templates, &profile, world, &config.language);
        Self {
            profile,
            registry,
            config,
            history,
            templates,
            call_seq: 0,
            turn: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.profile.name
    }

    pub fn history(&self) -> &AgentHistory {
        &self.history
    }

    pub fn busy(&self) -> bool {
        self.turn.is_some()
    }

    /// Events of the turn in flight so far.
    pub fn turn_events(&self) -> &[Draft] {
        self.turn
            .as_ref()
            .map(|t| t.events.as_slice())
            .unwrap_or_default()
    }

    /// Fresh prompt and function set for a new world. Call ids keep counting
    /// so they stay unique within the session.
    pub fn reinitialize(&mut self, registry: Registry, world: &WorldState) {
        self.registry = registry;
        self.history =
            build_initial_prompt(&self.templates, &self.profile, world, &self.config.language);
        self.turn = None;
    }

    /// Starts a turn: appends the instruction and returns the first request.
    pub fn begin_turn(&mut self, instruction: &str, epoch: u64, now: f64) -> CompletionRequest {
        assert!(
            self.turn.is_none(),
            "{} already has a turn in flight",
            self.profile.name
        );
        self.history.flush_world(now);
        self.history.push_user(instruction, now);
        self.turn = Some(Turn {
            epoch,
            instruction: instruction.to_string(),
            tool_calls: 0,
            executed: 0,
            actions: Vec::new(),
            events: Vec::new(),
            awaiting: None,
        });
        self.request(now)
    }

    fn request(&mut self, now: f64) -> CompletionRequest {
        self.history.flush_world(now);
        CompletionRequest {
            scope: self.profile.name.clone(),
            messages: self.history.window(self.config.context_cap),
            tools: self.registry.to_wire(),
            tool_choice: None,
            params: self.config.params.clone(),
        }
    }

    fn draft(&self, kind: EventKind, payload: Value) -> Draft {
        Draft::new(kind, Some(&self.profile.name), payload)
    }

    /// Handles a backend answer. `abort` is consulted before anything is
    /// executed.
    pub fn on_completion(
        &mut self,
        result: Result<Completion, BackendError>,
        world: &mut WorldState,
        abort: &AbortSignal,
        now: f64,
    ) -> TurnStep {
        let Some(epoch) = self.turn.as_ref().map(|t| t.epoch) else {
            return TurnStep::Done(self.finish(Terminal::Aborted));
        };
        if abort.epoch() != epoch {
            return TurnStep::Done(self.finish(Terminal::Aborted));
        }
        let completion = match result {
            Ok(c) => c,
            Err(err) => {
                let raw = match &err {
                    BackendError::Protocol { raw, .. } => Some(raw.clone()),
                    BackendError::Unavailable { .. } => None,
                };
                let d = self.draft(
                    EventKind::Error,
                    json!({"message": err.to_string(), "raw": raw}),
                );
                self.turn_mut().events.push(d);
                return TurnStep::Done(self.finish(Terminal::BackendError));
            }
        };
        match completion.kind {
            CompletionKind::Text(text) => {
                self.history.push_assistant_text(&text, now);
                let turn = self.turn_mut();
                let terminal = if turn.executed == 0 && text.trim_end().ends_with('?') {
                    Terminal::ClarificationRequested
                } else {
                    Terminal::Replied
                };
                let payload = json!({
                    "text": text,
                    "terminal": terminal.as_str(),
                    "instruction": turn.instruction,
                    "actions": turn.actions,
                    "latency": completion.latency,
                });
                let d = self.draft(EventKind::AgentReply, payload);
                self.turn_mut().events.push(d);
                TurnStep::Done(self.finish(terminal))
            }
            CompletionKind::ToolCall(mut call) => {
                self.call_seq += 1;
                call.id = format!("call_{}_{}", self.profile.name, self.call_seq);
                call.issuer = self.profile.name.clone();
                self.history.push_assistant_call(call.clone(), now);
                self.turn_mut().tool_calls += 1;
                let call_json = json!({
                    "call_id": call.id,
                    "function": call.function,
                    "arguments": call.arguments,
                });
                match validate(&call, &self.registry, world) {
                    Err(rejection) => {
                        self.history
                            .push_tool_result(&call.id, &rejection.feedback, now);
                        let d = self.draft(
                            EventKind::ToolRejected,
                            json!({"call": call_json, "verdict": rejection.verdict, "feedback": rejection.feedback, "latency": completion.latency}),
                        );
                        self.turn_mut().events.push(d);
                        self.continue_or_stop(now)
                    }
                    Ok(token) => {
                        if abort.epoch() != epoch {
                            self.history.push_tool_result(
                                &call.id,
                                "Stopped by the user before execution.",
                                now,
                            );
                            return TurnStep::Done(self.finish(Terminal::Aborted));
                        }
                        match execute(token, world) {
                            Err(race) => {
                                self.history.push_tool_result(&call.id, &race.feedback, now);
                                let d = self.draft(
                                    EventKind::ToolRejected,
                                    json!({"call": call_json, "verdict": {"verdict": "execution_race"}, "feedback": race.feedback, "latency": completion.latency}),
                                );
                                self.turn_mut().events.push(d);
                                self.continue_or_stop(now)
                            }
                            Ok(done) => {
                                let d = self.draft(
                                    EventKind::ToolExecuted,
                                    json!({"call": call_json, "feedback": done.feedback, "pending": done.pending, "latency": completion.latency}),
                                );
                                let action = peer_action(&self.profile.name, &call, true);
                                let turn = self.turn_mut();
                                turn.events.push(d);
                                turn.executed += 1;
                                if done.pending {
                                    turn.awaiting = Some(call.clone());
                                    TurnStep::AwaitEffect { call_id: call.id }
                                } else {
                                    turn.actions.push(action);
                                    self.history.push_tool_result(&call.id, &done.feedback, now);
                                    self.continue_or_stop(now)
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// A durative action of this agent finished.
    pub fn on_settled(
        &mut self,
        call_id: &str,
        success: bool,
        feedback: &str,
        now: f64,
    ) -> Option<TurnStep> {
        let turn = self.turn.as_mut()?;
        if turn.awaiting.as_ref().map(|c| c.id.as_str()) != Some(call_id) {
            return None;
        }
        let call = turn.awaiting.take().expect("checked above");
        turn.actions
            .push(peer_action(&self.profile.name, &call, success));
        self.history.push_tool_result(call_id, feedback, now);
        Some(self.continue_or_stop(now))
    }

    fn continue_or_stop(&mut self, now: f64) -> TurnStep {
        if self.turn_mut().tool_calls >= self.config.max_tool_iterations {
            let turn = self.turn_mut();
            let payload = json!({
                "text": Value::Null,
                "terminal": Terminal::StepBudgetExhausted.as_str(),
                "instruction": turn.instruction,
                "actions": turn.actions,
                "latency": 0.0,
            });
            let d = self.draft(EventKind::AgentReply, payload);
            self.turn_mut().events.push(d);
            return TurnStep::Done(self.finish(Terminal::StepBudgetExhausted));
        }
        TurnStep::Request(self.request(now))
    }

    /// Emergency stop: halts motion and ends any turn. The open tool call,
    /// if any, is closed so the history stays well formed.
    pub fn abort(&mut self, world: &mut WorldState, now: f64) -> Option<TurnOutcome> {
        world.halt(&self.profile.name);
        if let Some(open) = self.history.open_call().map(str::to_string) {
            self.history
                .push_tool_result(&open, "Stopped by the user.", now);
        }
        self.turn.as_ref()?;
        Some(self.finish(Terminal::Aborted))
    }

    fn finish(&mut self, terminal: Terminal) -> TurnOutcome {
        let turn = self.turn.take();
        TurnOutcome {
            agent: self.profile.name.clone(),
            events: turn.map(|t| t.events).unwrap_or_default(),
            terminal,
        }
    }

    fn turn_mut(&mut self) -> &mut Turn {
        self.turn.as_mut().expect("turn in flight")
    }

    /// Adds a summary of another agent's finished turn.
    pub fn receive_peer_log(&mut self, event: &SessionEvent, now: f64) {
        if event.agent.as_deref() == Some(self.profile.name.as_str()) {
            return;
        }
        if let Some(text) = peer_summary(event) {
            self.history.push_system(&text, now);
        }
    }

    /// Records the current world; sent as a delta before the next request.
    pub fn push_world_update(&mut self, facts: Facts) {
        self.history.note_world(facts);
    }

    /// Appends pending world changes right away.
    pub fn flush_world(&mut self, now: f64) -> bool {
        self.history.flush_world(now)
    }

    /// Runs a whole turn against a backend, stepping the world with `dt`
    /// while durative actions are under way. Meant for standalone use; the
    /// session drives the state machine itself.
    pub async fn handle_instruction(
        &mut self,
        backend: &dyn Backend,
        world: &mut WorldState,
        instruction: &str,
        abort: &AbortSignal,
        dt: f64,
    ) -> TurnOutcome {
        let mut step = TurnStep::Request(self.begin_turn(instruction, abort.epoch(), world.clock));
        loop {
            step = match step {
                TurnStep::Done(outcome) => return outcome,
                TurnStep::Request(req) => {
                    if abort.epoch() != self.turn.as_ref().map(|t| t.epoch).unwrap_or_default() {
                        return self.abort(world, world.clock).expect("turn in flight");
                    }
                    let result = backend.complete(&req).await;
                    self.on_completion(result, world, abort, world.clock)
                }
                TurnStep::AwaitEffect { call_id } => {
                    let mut settled = None;
                    while settled.is_none() {
                        if abort.epoch() != self.turn.as_ref().map(|t| t.epoch).unwrap_or_default()
                        {
                            return self.abort(world, world.clock).expect("turn in flight");
                        }
                        for notice in world.step(dt) {
                            if let Notice::Settled {
                                call_id: Some(id),
                                success,
                                feedback,
                                ..
                            } = notice
                            {
                                if id == call_id {
                                    settled = Some((success, feedback));
                                }
                            }
                        }
                        self.push_world_update(facts(world));
                    }
                    let (success, feedback) = settled.expect("loop exit");
                    self.on_settled(&call_id, success, &feedback, world.clock)
                        .expect("awaited call settles")
                }
            };
        }
    }
}

pub fn build_initial_prompt(
    templates: &PromptTemplates,
    profile: &AgentProfile,
    world: &WorldState,
    language: &str,
) -> AgentHistory {
    let prompt = agent_system_prompt(templates, profile, world, language);
    AgentHistory::new(&profile.name, prompt, facts(world), world.clock)
}

/// Third-person line for a finished action, used in peer summaries.
pub fn peer_action(agent: &str, call: &ToolCall, success: bool) -> String {
    let a = |k: &str| call.arg(k).unwrap_or("?");
    match (call.function.as_str(), success) {
        ("move_to", true) => format!("{agent} moved to the {}.", a("location")),
        ("move_to", false) => format!("{agent} could not reach the {}.", a("location")),
        ("pick_up", _) => format!("{agent} picked up the {}.", a("object")),
        ("put_down", _) => format!(
            "{agent} put the {} down on the {}.",
            a("object"),
            call.arg("surface").unwrap_or("ground")
        ),
        ("open_door", _) => format!("{agent} opened the {}.", a("door")),
        ("step_on_plate", _) => format!("{agent} stepped on the {}.", a("plate")),
        ("throw_away", _) => format!("{agent} threw the {} into the trash bin.", a("object")),
        ("flip", true) => format!("{agent} flipped the {}.", a("object")),
        ("flip", false) => format!(
            "{agent} tried to flip the {} but nobody helped.",
            a("object")
        ),
        (other, _) => format!("{agent} used {other}."),
    }
}

/// Template summary of another agent's event, or None if it is not worth
/// passing on.
pub fn peer_summary(event: &SessionEvent) -> Option<String> {
    let agent = event.agent.as_deref()?;
    match event.kind {
        EventKind::AgentReply => {
            let p = &event.payload;
            let mut parts = vec![format!(
                "The user told {agent}: \"{}\".",
                p["instruction"].as_str().unwrap_or_default()
            )];
            if let Some(actions) = p["actions"].as_array() {
                parts.extend(
                    actions
                        .iter()
                        .filter_map(|a| a.as_str().map(str::to_string)),
                );
            }
            match p["text"].as_str() {
                Some(text) => parts.push(format!("{agent} replied: \"{text}\".")),
                None => parts.push(format!("{agent} stopped without replying.")),
            }
            Some(parts.join(" "))
        }
        _ => None,
    }
}
