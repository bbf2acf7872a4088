//! Session events and their interaction-layer tags.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Operational,
    Tactical,
    Strategic,
    Cooperational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UserUtterance,
    Routing,
    AgentReply,
    ToolExecuted,
    ToolRejected,
    WorldChange,
    TaskSelected,
    GoalReached,
    Abort,
    Error,
}

/// One line of the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub sim_time: f64,
    /// RFC 3339.
    pub wall_time: String,
    pub layer: Layer,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub payload: Value,
}

/// An event before the sequencer has stamped it.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub kind: EventKind,
    pub agent: Option<String>,
    pub payload: Value,
}

impl Draft {
    pub fn new(kind: EventKind, agent: Option<&str>, payload: Value) -> Self {
        Self {
            kind,
            agent: agent.map(str::to_string),
            payload,
        }
    }
}

/// Rule-based layer tagging. Tags are observational metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRules {
    /// Layer for instructions and routing decisions.
    pub instruction_layer: Layer,
    /// Lower-case phrases that mark an utterance as being about how the
    /// team communicates.
    pub meta_phrases: Vec<String>,
}

impl Default for LayerRules {
    fn default() -> Self {
        Self {
            instruction_layer: Layer::Strategic,
            meta_phrases: [
                "talk to",
                "tell me",
                "let me know",
                "report back",
                "respond in",
                "answer in",
                "speak",
                "listen to",
                "ask me",
                "keep me posted",
                "inform",
                "don't ask",
                "do not ask",
                "stop asking",
                "be quiet",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl LayerRules {
    pub fn is_meta(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.meta_phrases.iter().any(|p| lower.contains(p.as_str()))
    }

    pub fn tag(&self, draft: &Draft) -> Layer {
        match draft.kind {
            EventKind::ToolExecuted
            | EventKind::ToolRejected
            | EventKind::WorldChange
            | EventKind::GoalReached
            | EventKind::Abort => Layer::Operational,
            EventKind::UserUtterance => {
                let text = draft.payload["text"].as_str().unwrap_or_default();
                if self.is_meta(text) {
                    Layer::Cooperational
                } else {
                    self.instruction_layer
                }
            }
            EventKind::AgentReply => {
                if draft.payload["terminal"] == "clarification_requested" {
                    Layer::Tactical
                } else {
                    self.instruction_layer
                }
            }
            EventKind::Routing | EventKind::TaskSelected | EventKind::Error => {
                self.instruction_layer
            }
        }
    }
}
