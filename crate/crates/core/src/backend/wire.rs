//! Chat-completions JSON bodies: request serialization, request parsing
//! (for round-trip checks and the stub server) and response parsing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    BackendError, BackendParams, ChatMessage, Completion, CompletionKind, CompletionRequest, Role,
    Usage,
};
use crate::actions::ToolCall;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_choice: Option<Value>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<WireToolCall>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireToolCall {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub function: WireFunctionCall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFunctionCall {
    pub name: String,
    /// JSON-encoded argument object.
    pub arguments: String,
}

impl WireToolCall {
    fn from_call(call: &ToolCall) -> Self {
        Self {
            id: call.id.clone(),
            kind: "function".to_string(),
            function: WireFunctionCall {
                name: call.function.clone(),
                arguments: call.arguments_json(),
            },
        }
    }

    fn to_call(&self) -> Result<ToolCall, BackendError> {
        let arguments: BTreeMap<String, Value> = serde_json::from_str(&self.function.arguments)
            .map_err(|e| BackendError::Protocol {
                message: format!("tool call arguments are not a JSON object: {e}"),
                raw: self.function.arguments.clone(),
            })?;
        Ok(ToolCall {
            id: self.id.clone(),
            function: self.function.name.clone(),
            arguments,
            issuer: String::new(),
        })
    }
}

pub fn to_wire_message(m: &ChatMessage) -> WireMessage {
    match (m.role, &m.tool_call) {
        (Role::Assistant, Some(call)) => WireMessage {
            role: "assistant".into(),
            content: None,
            tool_calls: Some(vec![WireToolCall::from_call(call)]),
            tool_call_id: None,
        },
        (Role::Tool, _) => WireMessage {
            role: "tool".into(),
            content: Some(m.content.clone()),
            tool_calls: None,
            tool_call_id: m.tool_call_ref.clone(),
        },
        (role, _) => WireMessage {
            role: role.as_str().into(),
            content: Some(m.content.clone()),
            tool_calls: None,
            tool_call_id: None,
        },
    }
}

pub fn from_wire_message(m: &WireMessage) -> Result<ChatMessage, BackendError> {
    let role = match m.role.as_str() {
        "system" => Role::System,
        "user" => Role::User,
        "assistant" => Role::Assistant,
        "tool" => Role::Tool,
        other => {
            return Err(BackendError::Protocol {
                message: format!("unknown role '{other}'"),
                raw: other.to_string(),
            })
        }
    };
    let tool_call = match m.tool_calls.as_deref() {
        Some([first, ..]) => Some(first.to_call()?),
        _ => None,
    };
    Ok(ChatMessage {
        role,
        content: m.content.clone().unwrap_or_default(),
        tool_call,
        tool_call_ref: m.tool_call_id.clone(),
        timestamp: 0.0,
    })
}

pub fn to_wire_request(req: &CompletionRequest) -> WireRequest {
    WireRequest {
        model: req.params.model.clone(),
        messages: req.messages.iter().map(to_wire_message).collect(),
        tools: (!req.tools.is_empty()).then(|| req.tools.clone()),
        tool_choice: req
            .tool_choice
            .as_ref()
            .map(|name| json!({"type": "function", "function": {"name": name}})),
        temperature: req.params.temperature,
        max_tokens: req.params.max_output_tokens,
    }
}

/// The exact request body sent to the server.
pub fn request_body(req: &CompletionRequest) -> String {
    serde_json::to_string(&to_wire_request(req)).expect("request serializes")
}

/// Parses a request body back into a completion request. Timestamps and the
/// scope are not part of the wire format and come back empty.
pub fn parse_request(body: &str) -> Result<CompletionRequest, BackendError> {
    let wire: WireRequest = serde_json::from_str(body).map_err(|e| BackendError::Protocol {
        message: format!("request body: {e}"),
        raw: body.to_string(),
    })?;
    let messages = wire
        .messages
        .iter()
        .map(from_wire_message)
        .collect::<Result<Vec<_>, _>>()?;
    let tool_choice = wire
        .tool_choice
        .as_ref()
        .and_then(|c| c["function"]["name"].as_str())
        .map(str::to_string);
    Ok(CompletionRequest {
        scope: String::new(),
        messages,
        tools: wire.tools.unwrap_or_default(),
        tool_choice,
        params: BackendParams {
            model: wire.model,
            temperature: wire.temperature,
            max_output_tokens: wire.max_tokens,
            ..BackendParams::default()
        },
    })
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Parses a response body. Only the first tool call is used.
pub fn parse_response(body: &str, latency: f64) -> Result<Completion, BackendError> {
    let protocol = |message: String| BackendError::Protocol {
        message,
        raw: body.to_string(),
    };
    let response: WireResponse =
        serde_json::from_str(body).map_err(|e| protocol(format!("response body: {e}")))?;
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| protocol("response has no choices".into()))?;
    let usage = response.usage.map(|u| Usage {
        prompt_tokens: u.prompt_tokens,
        completion_tokens: u.completion_tokens,
    });
    let kind = match choice.message.tool_calls.as_deref() {
        Some([first, rest @ ..]) => {
            if !rest.is_empty() {
                tracing::warn!(
                    ignored = rest.len(),
                    "server returned several tool calls, using the first"
                );
            }
            CompletionKind::ToolCall(first.to_call()?)
        }
        _ => CompletionKind::Text(choice.message.content.unwrap_or_default()),
    };
    Ok(Completion {
        kind,
        usage,
        latency,
    })
}

/// Builds a response body, the inverse of `parse_response`.
pub fn response_body(kind: &CompletionKind) -> String {
    let message = match kind {
        CompletionKind::Text(text) => json!({"role": "assistant", "content": text}),
        CompletionKind::ToolCall(call) => json!({
            "role": "assistant",
            "content": null,
            "tool_calls": [WireToolCall::from_call(call)],
        }),
    };
    json!({
        "id": "chatcmpl-stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": message, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
    })
    .to_string()
}
