use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde_json::{json, Value};
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

use crate::actions::registry_for;
use crate::agent::{AbortSignal, AgentConfig, AgentCore, PromptTemplates, Terminal, TurnStep};
use crate::backend::{Backend, BackendError, Completion};
use crate::dispatch::{Controller, RouteStep};
use crate::events::{Draft, EventKind, SessionEvent};
use crate::tasks::{goal_satisfied, TaskRegistry, TaskSpec};
use crate::world::{facts, Facts, Location, Notice, Scene, WorldState};

use super::{SessionConfig, SessionError, TranscriptWriter};

/// How the clock relates to wall time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Ticks back to back; every backend answer is awaited before the tick
    /// that may deliver it, so runs are deterministic.
    FastForward,
    /// One tick every `tick_ms / speed` milliseconds of wall time.
    Realtime { speed: f64 },
}

type CallResult = Result<Completion, BackendError>;

/// A backend request in flight. Dropping it cancels the request.
struct InFlight {
    issued_tick: u64,
    issued_at: f64,
    handle: Option<JoinHandle<CallResult>>,
    result: Option<CallResult>,
}

impl InFlight {
    /// Whether the answer may be delivered now: it has arrived and its
    /// simulated latency has elapsed.
    async fn ready(&mut self, block: bool, now: f64) -> bool {
        if self.result.is_none() {
            let Some(handle) = self.handle.as_mut() else {
                return false;
            };
            if !block && !handle.is_finished() {
                return false;
            }
            let joined = handle.await;
            self.handle = None;
            self.result = Some(joined.unwrap_or_else(|e| {
                Err(BackendError::Unavailable {
                    endpoint: "backend task".into(),
                    reason: e.to_string(),
                })
            }));
        }
        let latency = match &self.result {
            Some(Ok(c)) => c.latency,
            _ => 0.0,
        };
        now + 1e-9 >= self.issued_at + latency
    }

    fn take(mut self) -> CallResult {
        self.result.take().expect("ready before take")
    }
}

impl Drop for InFlight {
    fn drop(&mut self) {
        if let Some(h) = &self.handle {
            h.abort();
        }
    }
}

/// Owns one session: world, controller, agents, in-flight requests and the
/// event sequence. Every mutation goes through `tick` or a command method.
pub struct Orchestrator {
    config: SessionConfig,
    scene: Arc<Scene>,
    tasks: TaskRegistry,
    backend: Arc<dyn Backend>,
    world: WorldState,
    task: TaskSpec,
    controller: Controller,
    agents: Vec<AgentCore>,
    abort: AbortSignal,
    controller_call: Option<InFlight>,
    agent_calls: BTreeMap<String, InFlight>,
    reported: BTreeMap<String, usize>,
    utterances: VecDeque<String>,
    queued: BTreeMap<String, String>,
    facts: Facts,
    goal_reached: bool,
    tick_count: u64,
    clock_base: f64,
    seq: u64,
    log: Vec<SessionEvent>,
    transcript: Option<TranscriptWriter>,
    events_tx: broadcast::Sender<SessionEvent>,
}

impl Orchestrator {
    /// A session on task 1.
    pub fn new(config: SessionConfig, backend: Arc<dyn Backend>) -> Result<Self, SessionError> {
        Self::with_task(config, backend, 1)
    }

    pub fn with_task(
        config: SessionConfig,
        backend: Arc<dyn Backend>,
        task_id: u8,
    ) -> Result<Self, SessionError> {
        config.check()?;
        let scene = Scene::builtin();
        let tasks = TaskRegistry::builtin(&scene);
        let task = tasks.get(task_id)?.clone();
        let mut world = tasks.spawn(scene.clone(), task_id)?;
        world.config.door_open_s = config.door_open_s;
        let transcript = config
            .log_dir
            .as_deref()
            .map(TranscriptWriter::create)
            .transpose()?;
        let templates = Arc::new(PromptTemplates::builtin());
        let agent_config = AgentConfig {
            max_tool_iterations: config.max_tool_iterations,
            context_cap: config.context_cap,
            language: config.language.clone(),
            params: config.params(),
        };
        let agents = scene
            .agents
            .iter()
            .map(|a| {
                let registry = registry_for(&a.profile, &task, &scene);
                AgentCore::new(
                    a.profile.clone(),
                    registry,
                    &world,
                    templates.clone(),
                    agent_config.clone(),
                )
            })
            .collect();
        let controller = Controller::new(
            scene.roster(),
            templates,
            &config.language,
            config.params(),
            config.context_cap,
        );
        let (events_tx, _) = broadcast::channel(1024);
        let facts = facts(&world);
        let mut orch = Self {
            config,
            scene,
            tasks,
            backend,
            world,
            task,
            controller,
            agents,
            abort: AbortSignal::new(),
            controller_call: None,
            agent_calls: BTreeMap::new(),
            reported: BTreeMap::new(),
            utterances: VecDeque::new(),
            queued: BTreeMap::new(),
            facts,
            goal_reached: false,
            tick_count: 0,
            clock_base: 0.0,
            seq: 0,
            log: Vec::new(),
            transcript,
            events_tx,
        };
        orch.emit_task_selected();
        Ok(orch)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn goal_reached(&self) -> bool {
        self.goal_reached
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn agents(&self) -> &[AgentCore] {
        &self.agents
    }

    pub fn agent(&self, name: &str) -> Option<&AgentCore> {
        self.agents.iter().find(|a| a.name() == name)
    }

    pub fn abort_signal(&self) -> &AbortSignal {
        &self.abort
    }

    /// Every event emitted so far.
    pub fn events(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SessionEvent> {
        self.events_tx.subscribe()
    }

    pub fn events_sender(&self) -> broadcast::Sender<SessionEvent> {
        self.events_tx.clone()
    }

    pub fn transcript_path(&self) -> Option<&std::path::Path> {
        self.transcript.as_ref().map(|t| t.path())
    }

    /// Session time: keeps running across task switches.
    pub fn sim_time(&self) -> f64 {
        round6(self.clock_base + self.world.clock)
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    pub fn ticks(&self) -> u64 {
        self.tick_count
    }

    /// Anything routed, queued, in flight or running in the world.
    pub fn has_work(&self) -> bool {
        self.controller_call.is_some()
            || self.controller.busy()
            || !self.agent_calls.is_empty()
            || self.agents.iter().any(AgentCore::busy)
            || !self.utterances.is_empty()
            || !self.queued.is_empty()
    }

    pub fn is_idle(&self) -> bool {
        !self.has_work()
    }

    fn emit(&mut self, draft: Draft) -> SessionEvent {
        self.seq += 1;
        let event = SessionEvent {
            seq: self.seq,
            sim_time: self.sim_time(),
            wall_time: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            layer: self.config.layer_rules.tag(&draft),
            kind: draft.kind,
            agent: draft.agent,
            payload: draft.payload,
        };
        if let Some(t) = &mut self.transcript {
            if let Err(e) = t.append(&event) {
                tracing::error!(path = %t.path().display(), "transcript write failed: {e}");
            }
        }
        let _ = self.events_tx.send(event.clone());
        self.log.push(event.clone());
        event
    }

    fn emit_task_selected(&mut self) {
        let payload = json!({
            "task": self.task.id,
            "title": self.task.title,
            "preview": self.task.preview,
            "requires_cooperation": self.task.requires_cooperation,
        });
        self.emit(Draft::new(EventKind::TaskSelected, None, payload));
    }

    /// Takes a typed utterance from the operator. Routing starts on the
    /// next tick.
    pub fn submit_utterance(&mut self, text: &str) {
        let text = text.trim();
        if text.is_empty() {
            self.emit(Draft::new(
                EventKind::Error,
                None,
                json!({"message": "empty utterance ignored"}),
            ));
            return;
        }
        self.emit(Draft::new(
            EventKind::UserUtterance,
            None,
            json!({"text": text, "transcription_confidence": Value::Null}),
        ));
        self.utterances.push_back(text.to_string());
    }

    /// Emergency stop: every agent halts, every request is dropped, queued
    /// utterances are discarded.
    pub fn abort_all(&mut self) {
        let now = self.world.clock;
        self.abort.raise();
        let mut halted = Vec::new();
        let mut interrupted = Vec::new();
        for agent in &mut self.agents {
            let name = agent.name().to_string();
            if self
                .world
                .agent(&name)
                .is_some_and(|a| a.heading_target.is_some() || a.pending.is_some())
            {
                halted.push(name.clone());
            }
            if agent.abort(&mut self.world, now).is_some() {
                interrupted.push(name);
            }
        }
        self.agent_calls.clear();
        let routing_cancelled = self.controller_call.take().is_some() || self.controller.busy();
        self.controller.cancel(now);
        self.reported.clear();
        let mut dropped: Vec<String> = self.utterances.drain(..).collect();
        dropped.extend(std::mem::take(&mut self.queued).into_values());
        self.emit(Draft::new(
            EventKind::Abort,
            None,
            json!({
                "halted": halted,
                "interrupted": interrupted,
                "routing_cancelled": routing_cancelled,
                "dropped_utterances": dropped,
            }),
        ));
    }

    /// Respawns the world for another task and starts every history afresh.
    pub fn select_task(&mut self, id: u8) {
        let task = match self.tasks.get(id) {
            Ok(t) => t.clone(),
            Err(e) => {
                self.emit(Draft::new(
                    EventKind::Error,
                    None,
                    json!({"message": e.to_string()}),
                ));
                return;
            }
        };
        if self.has_work() {
            self.abort_all();
        }
        let mut world =
            WorldState::spawn(self.scene.clone(), &task).expect("registry validated the task");
        world.config.door_open_s = self.config.door_open_s;
        self.clock_base = self.sim_time();
        for agent in &mut self.agents {
            let registry = registry_for(&agent.profile, &task, &self.scene);
            agent.reinitialize(registry, &world);
        }
        self.controller.reinitialize(0.0);
        self.facts = facts(&world);
        self.world = world;
        self.task = task;
        self.goal_reached = false;
        self.emit_task_selected();
    }

    fn issue(&self, request: crate::backend::CompletionRequest) -> InFlight {
        let backend = self.backend.clone();
        InFlight {
            issued_tick: self.tick_count,
            issued_at: self.world.clock,
            handle: Some(tokio::spawn(
                async move { backend.complete(&request).await },
            )),
            result: None,
        }
    }

    fn agent_index(&self, name: &str) -> usize {
        self.agents
            .iter()
            .position(|a| a.name() == name)
            .expect("roster name")
    }

    fn start_turn(&mut self, name: &str, instruction: &str) {
        let i = self.agent_index(name);
        let epoch = self.abort.epoch();
        let request = self.agents[i].begin_turn(instruction, epoch, self.world.clock);
        self.reported.insert(name.to_string(), 0);
        let call = self.issue(request);
        self.agent_calls.insert(name.to_string(), call);
    }

    /// Emits what the agent produced and acts on its next step.
    fn drive(&mut self, name: &str, step: TurnStep) {
        let i = self.agent_index(name);
        let now = self.world.clock;
        match step {
            TurnStep::Done(outcome) => {
                let start = self.reported.remove(name).unwrap_or(0);
                let mut reply = None;
                for draft in outcome.events.into_iter().skip(start) {
                    let event = self.emit(draft);
                    if event.kind == EventKind::AgentReply {
                        reply = Some(event);
                    }
                }
                if let Some(event) = reply {
                    for agent in &mut self.agents {
                        agent.receive_peer_log(&event, now);
                    }
                    let note = match event.payload["text"].as_str() {
                        Some(text) => format!("{name} replied: {text}"),
                        None => format!("{name} stopped after too many actions."),
                    };
                    self.controller.note(&note, now);
                }
                if outcome.terminal != Terminal::Aborted {
                    if let Some(next) = self.queued.remove(name) {
                        self.start_turn(name, &next);
                    }
                }
            }
            step => {
                let start = self.reported.get(name).copied().unwrap_or(0);
                let fresh: Vec<Draft> = self.agents[i].turn_events()[start..].to_vec();
                self.reported.insert(name.to_string(), start + fresh.len());
                for draft in fresh {
                    self.emit(draft);
                }
                if let TurnStep::Request(request) = step {
                    let call = self.issue(request);
                    self.agent_calls.insert(name.to_string(), call);
                }
            }
        }
    }

    fn on_route(&mut self, result: CallResult) {
        let now = self.world.clock;
        match self.controller.on_completion(result, now) {
            RouteStep::Retry(request) => self.controller_call = Some(self.issue(request)),
            RouteStep::Failed(e) => {
                self.emit(Draft::new(
                    EventKind::Error,
                    None,
                    json!({"message": e.to_string(), "utterance": e.utterance}),
                ));
            }
            RouteStep::Decided(decision) => {
                let mut queued = Vec::new();
                let mut superseded = Vec::new();
                for name in &decision.recipients {
                    if self.agents[self.agent_index(name)].busy() {
                        let text = decision.per_recipient_text[name].clone();
                        if let Some(old) = self.queued.insert(name.clone(), text) {
                            superseded.push(old);
                        }
                        queued.push(name.clone());
                    }
                }
                let note = decision
                    .recipients
                    .is_empty()
                    .then_some("The utterance was not addressed to any robot.");
                self.emit(Draft::new(
                    EventKind::Routing,
                    None,
                    json!({
                        "recipients": decision.recipients,
                        "instructions": decision.per_recipient_text,
                        "rationale": decision.rationale,
                        "added": decision.added,
                        "dropped": decision.dropped,
                        "queued": queued,
                        "superseded": superseded,
                        "note": note,
                    }),
                ));
                for name in &decision.recipients {
                    if !queued.contains(name) {
                        self.start_turn(name, &decision.per_recipient_text[name]);
                    }
                }
            }
        }
    }

    /// One simulation tick. With `block` every outstanding request is
    /// awaited first, otherwise only finished ones are considered.
    pub async fn tick(&mut self, block: bool) {
        let now = self.world.clock;
        let tick = self.tick_count;

        if let Some(call) = self.controller_call.as_mut() {
            if call.issued_tick < tick && call.ready(block, now).await {
                let result = self.controller_call.take().expect("present").take();
                self.on_route(result);
            }
        }
        for name in self.scene.roster() {
            let Some(call) = self.agent_calls.get_mut(&name) else {
                continue;
            };
            if call.issued_tick < tick && call.ready(block, now).await {
                let result = self.agent_calls.remove(&name).expect("present").take();
                let i = self.agent_index(&name);
                let step = self.agents[i].on_completion(result, &mut self.world, &self.abort, now);
                self.drive(&name, step);
            }
        }

        let notices = self.world.step(self.config.dt());
        self.diff_facts();
        let now = self.world.clock;
        for notice in notices {
            if let Notice::Settled {
                agent,
                call_id,
                success,
                feedback,
            } = notice
            {
                self.emit(Draft::new(
                    EventKind::WorldChange,
                    Some(&agent),
                    json!({"call_id": call_id, "success": success, "feedback": feedback}),
                ));
                let i = self.agent_index(&agent);
                if let Some(id) = call_id {
                    if let Some(step) = self.agents[i].on_settled(&id, success, &feedback, now) {
                        self.drive(&agent, step);
                    }
                }
            }
        }

        if !self.goal_reached && goal_satisfied(&self.task, &self.world).unwrap_or(false) {
            self.goal_reached = true;
            let payload = json!({"task": self.task.id, "title": self.task.title});
            self.emit(Draft::new(EventKind::GoalReached, None, payload));
        }

        if self.controller_call.is_none() && !self.controller.busy() {
            if let Some(utterance) = self.utterances.pop_front() {
                let request = self.controller.begin_route(&utterance, now);
                self.controller_call = Some(self.issue(request));
            }
        }
        self.tick_count += 1;
    }

    fn diff_facts(&mut self) {
        let current = facts(&self.world);
        if current == self.facts {
            return;
        }
        let changes: Vec<Value> = current
            .iter()
            .filter(|(k, v)| self.facts.get(*k) != Some(v))
            .map(|(k, v)| json!({"key": k, "fact": v}))
            .chain(
                self.facts
                    .keys()
                    .filter(|k| !current.contains_key(*k))
                    .map(|k| json!({"key": k, "fact": Value::Null})),
            )
            .collect();
        for agent in &mut self.agents {
            agent.push_world_update(current.clone());
        }
        self.facts = current;
        self.emit(Draft::new(
            EventKind::WorldChange,
            None,
            json!({"changes": changes}),
        ));
    }

    /// Ticks until nothing is left to do or `max_s` of simulated time has
    /// passed. Returns whether the session went idle.
    pub async fn run_until_idle(&mut self, max_s: f64) -> bool {
        let deadline = self.world.clock + max_s;
        loop {
            self.tick(true).await;
            if self.is_idle() {
                return true;
            }
            if self.world.clock >= deadline {
                return false;
            }
        }
    }

    /// Ticks for `seconds` of simulated time.
    pub async fn run_for(&mut self, seconds: f64) {
        let deadline = self.world.clock + seconds - 1e-9;
        while self.world.clock < deadline {
            self.tick(true).await;
        }
    }

    /// The view sent to observers: positions, holdings, doors, timers and
    /// task status.
    pub fn snapshot(&self) -> Value {
        let w = &self.world;
        let agents: Vec<Value> = self
            .agents
            .iter()
            .filter_map(|core| {
                let a = w.agent(core.name())?;
                Some(json!({
                    "name": core.name(),
                    "color": a.profile.color,
                    "x": a.position.x,
                    "y": a.position.y,
                    "region": a.position.region,
                    "heading": a.heading_target.as_ref().map(|h| json!({"x": h.x, "y": h.y})),
                    "holding": a.holding,
                    "busy": core.busy(),
                }))
            })
            .collect();
        let entities: Vec<Value> = w
            .entities
            .values()
            .map(|e| {
                let pos = w.entity_position(&e.id);
                let (state, host) = match &e.location {
                    Location::Ground(_) => ("ground", None),
                    Location::HeldBy(a) => ("held", Some(a.clone())),
                    Location::Inside(h) => ("inside", Some(h.clone())),
                    Location::Destroyed => ("destroyed", None),
                };
                json!({
                    "id": e.id,
                    "name": e.name,
                    "label": e.label,
                    "kind": e.kind,
                    "state": state,
                    "host": host,
                    "x": pos.as_ref().map(|p| p.x),
                    "y": pos.as_ref().map(|p| p.y),
                    "flipped": e.flipped,
                    "broken": e.broken,
                })
            })
            .collect();
        let doors: Vec<Value> = w
            .doors
            .iter()
            .map(|(id, d)| {
                json!({
                    "id": id,
                    "open": d.open,
                    "locked_by": d.locked_by,
                    "timed": d.timed,
                    "timer_remaining": d.timer_remaining,
                    "open_duration": d.timed.then_some(w.config.door_open_s),
                })
            })
            .collect();
        json!({
            "sim_time": self.sim_time(),
            "task": {
                "id": self.task.id,
                "title": self.task.title,
                "preview": self.task.preview,
                "goal_reached": self.goal_reached,
            },
            "agents": agents,
            "entities": entities,
            "doors": doors,
        })
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
