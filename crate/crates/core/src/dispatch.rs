//! The routing controller: decides which agents receive an utterance,
//! through a forced `dispatch` tool call, and enforces explicit name
//! mentions afterwards.

use std::collections::BTreeMap;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::{controller_system_prompt, AgentHistory, PromptTemplates};
use crate::backend::{BackendError, BackendParams, Completion, CompletionKind, CompletionRequest};
use crate::world::Facts;

pub const DISPATCH_TOOL: &str = "dispatch";
pub const CONTROLLER_SCOPE: &str = "controller";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub recipients: Vec<String>,
    pub per_recipient_text: BTreeMap<String, String>,
    pub rationale: String,
    /// Names added because the utterance mentions them.
    #[serde(default)]
    pub added: Vec<String>,
    /// Names the backend proposed that are not on the roster.
    #[serde(default)]
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("could not route \"{utterance}\": {reason}")]
pub struct RoutingError {
    pub utterance: String,
    pub reason: String,
}

/// What the controller wants next.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteStep {
    Retry(CompletionRequest),
    Decided(RoutingDecision),
    Failed(RoutingError),
}

/// The dispatch tool in wire format.
pub fn dispatch_tool(roster: &[String]) -> Value {
    let instruction_props: serde_json::Map<String, Value> = roster
        .iter()
        .map(|n| (n.clone(), json!({"type": "string"})))
        .collect();
    json!({
        "type": "function",
        "function": {
            "name": DISPATCH_TOOL,
            "description": "Send the user's message to the robots it is meant for. Call this exactly once per user message.",
            "parameters": {
                "type": "object",
                "properties": {
                    "recipients": {
                        "type": "array",
                        "items": {"type": "string", "enum": roster},
                        "description": "Robots that receive the message. May be empty."
                    },
                    "instructions": {
                        "type": "object",
                        "properties": instruction_props,
                        "description": "For each recipient, the text it receives."
                    },
                    "rationale": {"type": "string", "description": "Why these recipients."}
                },
                "required": ["recipients", "instructions", "rationale"]
            }
        }
    })
}

/// Roster names mentioned as whole words, ignoring case, in roster order.
pub fn mentioned_names(utterance: &str, roster: &[String]) -> Vec<String> {
    roster
        .iter()
        .filter(|name| {
            Regex::new(&format!(r"(?i)\b{}\b", regex::escape(name)))
                .map(|re| re.is_match(utterance))
                .unwrap_or(false)
        })
        .cloned()
        .collect()
}

/// Turns raw dispatch arguments into a decision that satisfies the
/// invariants: recipients drawn from the roster without duplicates, every
/// named agent included, one text per recipient.
pub fn enforce(
    arguments: &BTreeMap<String, Value>,
    utterance: &str,
    roster: &[String],
) -> RoutingDecision {
    let canonical = |s: &str| {
        roster
            .iter()
            .find(|n| n.eq_ignore_ascii_case(s.trim()))
            .cloned()
    };
    let mut chosen: Vec<String> = Vec::new();
    let mut dropped = Vec::new();
    let proposed: Vec<String> = match arguments.get("recipients") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .unwrap_or_else(|| v.to_string())
            })
            .collect(),
        Some(Value::String(s)) => s.split(',').map(str::to_string).collect(),
        _ => Vec::new(),
    };
    for p in proposed {
        match canonical(&p) {
            Some(name) if !chosen.contains(&name) => chosen.push(name),
            Some(_) => {}
            None => dropped.push(p),
        }
    }
    let mut added = Vec::new();
    for name in mentioned_names(utterance, roster) {
        if !chosen.contains(&name) {
            chosen.push(name.clone());
            added.push(name);
        }
    }
    let recipients: Vec<String> = roster
        .iter()
        .filter(|n| chosen.contains(n))
        .cloned()
        .collect();
    let instructions = arguments.get("instructions").and_then(Value::as_object);
    let per_recipient_text = recipients
        .iter()
        .map(|name| {
            let text = if added.contains(name) {
                None
            } else {
                instructions
                    .and_then(|m| m.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)))
                    .and_then(|(_, v)| v.as_str())
                    .filter(|t| !t.trim().is_empty())
            };
            (name.clone(), text.unwrap_or(utterance).to_string())
        })
        .collect();
    RoutingDecision {
        recipients,
        per_recipient_text,
        rationale: arguments
            .get("rationale")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        added,
        dropped,
    }
}

#[derive(Debug, Clone)]
struct Pending {
    utterance: String,
    attempts: u8,
}

#[derive(Debug, Clone)]
pub struct Controller {
    roster: Vec<String>,
    history: AgentHistory,
    templates: Arc<PromptTemplates>,
    language: String,
    params: BackendParams,
    context_cap: usize,
    call_seq: u64,
    pending: Option<Pending>,
}

impl Controller {
    pub fn new(
        roster: Vec<String>,
        templates: Arc<PromptTemplates>,
        language: &str,
        params: BackendParams,
        context_cap: usize,
    ) -> Self {
        let prompt = controller_system_prompt(&templates, &roster, language);
        Self {
            history: AgentHistory::new(CONTROLLER_SCOPE, prompt, Facts::new(), 0.0),
            roster,
            templates,
            language: language.to_string(),
            params,
            context_cap,
            call_seq: 0,
            pending: None,
        }
    }

    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn history(&self) -> &AgentHistory {
        &self.history
    }

    pub fn busy(&self) -> bool {
        self.pending.is_some()
    }

    pub fn reinitialize(&mut self, now: f64) {
        let prompt = controller_system_prompt(&self.templates, &self.roster, &self.language);
        self.history = AgentHistory::new(CONTROLLER_SCOPE, prompt, Facts::new(), now);
        self.pending = None;
    }

    /// Drops a routing in progress, closing any open call.
    pub fn cancel(&mut self, now: f64) {
        if let Some(open) = self.history.open_call().map(str::to_string) {
            self.history.push_tool_result(&open, "Cancelled.", now);
        }
        self.pending = None;
    }

    /// Context for later routing, such as what an agent answered.
    pub fn note(&mut self, text: &str, now: f64) {
        self.history.push_system(text, now);
    }

    pub fn begin_route(&mut self, utterance: &str, now: f64) -> CompletionRequest {
        assert!(self.pending.is_none(), "routing already in progress");
        self.history.push_user(utterance, now);
        self.pending = Some(Pending {
            utterance: utterance.to_string(),
            attempts: 1,
        });
        self.request()
    }

    fn request(&self) -> CompletionRequest {
        CompletionRequest {
            scope: CONTROLLER_SCOPE.to_string(),
            messages: self.history.window(self.context_cap),
            tools: vec![dispatch_tool(&self.roster)],
            tool_choice: Some(DISPATCH_TOOL.to_string()),
            params: self.params.clone(),
        }
    }

    pub fn on_completion(
        &mut self,
        result: Result<Completion, BackendError>,
        now: f64,
    ) -> RouteStep {
        let Some(pending) = self.pending.clone() else {
            return RouteStep::Failed(RoutingError {
                utterance: String::new(),
                reason: "no routing in progress".into(),
            });
        };
        let failure = match result {
            Ok(Completion {
                kind: CompletionKind::ToolCall(mut call),
                ..
            }) if call.function == DISPATCH_TOOL => {
                self.call_seq += 1;
                call.id = format!("call_{CONTROLLER_SCOPE}_{}", self.call_seq);
                let decision = enforce(&call.arguments, &pending.utterance, &self.roster);
                self.history.push_assistant_call(call.clone(), now);
                let confirmation = if decision.recipients.is_empty() {
                    "Delivered to nobody.".to_string()
                } else {
                    format!("Delivered to {}.", decision.recipients.join(", "))
                };
                self.history.push_tool_result(&call.id, &confirmation, now);
                self.pending = None;
                return RouteStep::Decided(decision);
            }
            Ok(Completion {
                kind: CompletionKind::ToolCall(call),
                ..
            }) => {
                format!(
                    "the controller called '{}' instead of dispatch",
                    call.function
                )
            }
            Ok(Completion {
                kind: CompletionKind::Text(text),
                ..
            }) => {
                self.history.push_assistant_text(&text, now);
                "the controller answered without calling dispatch".to_string()
            }
            Err(e) => e.to_string(),
        };
        if pending.attempts >= 2 {
            self.pending = None;
            return RouteStep::Failed(RoutingError {
                utterance: pending.utterance,
                reason: failure,
            });
        }
        self.pending = Some(Pending {
            attempts: pending.attempts + 1,
            ..pending
        });
        self.history.push_system(
            "Call the dispatch function to route the last user message.",
            now,
        );
        RouteStep::Retry(self.request())
    }
}
