//! Chat-completion backends. The remote client speaks the chat-completions
//! wire format; the scripted backend answers from a rule file.

mod latency;
mod remote;
mod scripted;
mod stub;
pub mod wire;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::actions::ToolCall;

pub use latency::{Delay, LatencyInjector};
pub use remote::RemoteBackend;
pub use scripted::{Match, Response, ScriptError, ScriptRule, ScriptedBackend, FALLBACK_TEXT};
pub use stub::{CannedResponse, StubServer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    /// For tool messages: the call this is the result of.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_ref: Option<String>,
    /// Simulation time the message was appended.
    #[serde(default)]
    pub timestamp: f64,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>, timestamp: f64) -> Self {
        Self::plain(Role::System, content, timestamp)
    }

    pub fn user(content: impl Into<String>, timestamp: f64) -> Self {
        Self::plain(Role::User, content, timestamp)
    }

    pub fn assistant(content: impl Into<String>, timestamp: f64) -> Self {
        Self::plain(Role::Assistant, content, timestamp)
    }

    pub fn assistant_call(call: ToolCall, timestamp: f64) -> Self {
        Self {
            role: Role::Assistant,
            content: String::new(),
            tool_call: Some(call),
            tool_call_ref: None,
            timestamp,
        }
    }

    pub fn tool_result(call_id: &str, content: impl Into<String>, timestamp: f64) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_call: None,
            tool_call_ref: Some(call_id.to_string()),
            timestamp,
        }
    }

    fn plain(role: Role, content: impl Into<String>, timestamp: f64) -> Self {
        Self {
            role,
            content: content.into(),
            tool_call: None,
            tool_call_ref: None,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendParams {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Seconds.
    pub request_timeout: f64,
}

impl Default for BackendParams {
    fn default() -> Self {
        Self {
            model: "gpt-4-0613".to_string(),
            temperature: 0.2,
            max_output_tokens: 512,
            request_timeout: 30.0,
        }
    }
}

impl BackendParams {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!(
                "temperature {} is outside [0, 2]",
                self.temperature
            ));
        }
        if self.request_timeout <= 0.0 {
            return Err("request timeout must be positive".into());
        }
        Ok(())
    }
}

/// Everything a backend needs for one completion.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    /// Who is asking: an agent name or `controller`. Only the scripted
    /// backend looks at it.
    pub scope: String,
    pub messages: Vec<ChatMessage>,
    /// Tool descriptors in wire format.
    pub tools: Vec<Value>,
    /// Forces a call of the named tool.
    pub tool_choice: Option<String>,
    pub params: BackendParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionKind {
    Text(String),
    ToolCall(ToolCall),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub kind: CompletionKind,
    pub usage: Option<Usage>,
    /// Seconds between request and answer.
    pub latency: f64,
}

impl Completion {
    pub fn text(text: impl Into<String>, latency: f64) -> Self {
        Self {
            kind: CompletionKind::Text(text.into()),
            usage: None,
            latency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend at {endpoint} unavailable: {reason}")]
    Unavailable { endpoint: String, reason: String },
    #[error("backend protocol error: {message}")]
    Protocol { message: String, raw: String },
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;
}
