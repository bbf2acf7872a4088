//! Deterministic rule-driven backend.
//!
//! A script is a JSON list of rules. For each completion the rules whose
//! scope matches the caller are tried in file order against the last user or
//! tool message; the first match answers. Patterns may contain `{name}`
//! placeholders whose captured text is substituted into the response.

use std::collections::BTreeMap;
use std::path::Path;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{
    Backend, BackendError, ChatMessage, Completion, CompletionKind, CompletionRequest, Role,
};
use crate::actions::ToolCall;

pub const FALLBACK_TEXT: &str = "I did not understand.";

/// Scope that matches every caller.
pub const ANY_SCOPE: &str = "*";

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("{origin}: line {line}, column {column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: {source}")]
    Io {
        origin: String,
        source: std::io::Error,
    },
    #[error("{origin}: rule {index}: bad pattern: {message}")]
    Pattern {
        origin: String,
        index: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Match {
    /// The whole message equals the pattern.
    Exact(String),
    /// The pattern occurs in the message, ignoring case.
    Substring(String),
    /// The conversation has exactly this many user messages.
    Ordinal(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Text(String),
    ToolCall {
        function: String,
        #[serde(default)]
        arguments: BTreeMap<String, Value>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub scope: String,
    #[serde(rename = "match")]
    pub matcher: Match,
    pub response: Response,
    /// Simulated answer time in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_s: Option<f64>,
}

#[derive(Debug)]
struct Compiled {
    rule: ScriptRule,
    regex: Option<Regex>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Vec<Compiled>,
    default_latency: f64,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, ScriptError> {
        Self::compile(rules, "script")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ScriptError> {
        let rules: Vec<ScriptRule> =
            serde_json::from_str(text).map_err(|e| ScriptError::Parse {
                origin: origin.to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        Self::compile(rules, origin)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            origin: origin.clone(),
            source,
        })?;
        Self::from_json(&text, &origin)
    }

    /// Latency for rules that do not declare one, and for the fallback.
    pub fn with_default_latency(mut self, seconds: f64) -> Self {
        self.default_latency = seconds;
        self
    }

    pub fn rules(&self) -> impl Iterator<Item = &ScriptRule> {
        self.rules.iter().map(|c| &c.rule)
    }

    fn compile(rules: Vec<ScriptRule>, origin: &str) -> Result<Self, ScriptError> {
        let rules = rules
            .into_iter()
            .enumerate()
            .map(|(index, rule)| {
                let regex = match &rule.matcher {
                    Match::Exact(p) => Some(pattern_regex(p, true)),
                    Match::Substring(p) => Some(pattern_regex(p, false)),
                    Match::Ordinal(_) => None,
                }
                .transpose()
                .map_err(|e| ScriptError::Pattern {
                    origin: origin.to_string(),
                    index,
                    message: e.to_string(),
                })?;
                Ok(Compiled { rule, regex })
            })
            .collect::<Result<Vec<_>, ScriptError>>()?;
        Ok(Self {
            rules,
            default_latency: 0.0,
        })
    }

    /// The completion for a conversation. Pure in its inputs.
    pub fn answer(&self, scope: &str, messages: &[ChatMessage]) -> Completion {
        let subject = messages
            .iter()
            .rev()
            .find(|m| matches!(m.role, Role::User | Role::Tool))
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let user_turns = messages.iter().filter(|m| m.role == Role::User).count();
        for compiled in &self.rules {
            let rule = &compiled.rule;
            if rule.scope != scope && rule.scope != ANY_SCOPE {
                continue;
            }
            let captures = match (&rule.matcher, &compiled.regex) {
                (Match::Ordinal(n), _) if *n == user_turns => Some(BTreeMap::new()),
                (Match::Ordinal(_), _) => None,
                (_, Some(re)) => re.captures(subject).map(|caps| {
                    re.capture_names()
                        .flatten()
                        .filter_map(|n| {
                            caps.name(n)
                                .map(|m| (n.to_string(), m.as_str().trim().to_string()))
                        })
                        .collect()
                }),
                (_, None) => None,
            };
            let Some(captures) = captures else { continue };
            let latency = rule.latency_s.unwrap_or(self.default_latency);
            let kind = match &rule.response {
                Response::Text(t) => CompletionKind::Text(substitute(t, &captures)),
                Response::ToolCall {
                    function,
                    arguments,
                } => CompletionKind::ToolCall(ToolCall {
                    id: format!("call_{}", messages.len()),
                    function: function.clone(),
                    arguments: arguments
                        .iter()
                        .map(|(k, v)| (k.clone(), substitute_value(v, &captures)))
                        .collect(),
                    issuer: String::new(),
                }),
            };
            return Completion {
                kind,
                usage: None,
                latency,
            };
        }
        Completion::text(FALLBACK_TEXT, self.default_latency)
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        Ok(self.answer(&request.scope, &request.messages))
    }
}

/// Turns a pattern with `{name}` placeholders into a regex. A placeholder at
/// the very end of a substring pattern runs to the end of the clause.
fn pattern_regex(pattern: &str, anchored: bool) -> Result<Regex, regex::Error> {
    let placeholder = Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex");
    let mut out = String::from(if anchored { "^" } else { "(?i)" });
    let mut last = 0;
    let total = pattern.len();
    for m in placeholder.captures_iter(pattern) {
        let whole = m.get(0).expect("match");
        out.push_str(&regex::escape(&pattern[last..whole.start()]));
        let name = &m[1];
        if whole.end() == total {
            out.push_str(&format!("(?P<{name}>[^.,!?;]+)"));
        } else {
            out.push_str(&format!("(?P<{name}>[^.,!?;]+?)"));
        }
        last = whole.end();
    }
    out.push_str(&regex::escape(&pattern[last..]));
    if anchored {
        out.push('$');
    }
    Regex::new(&out)
}

fn substitute(template: &str, captures: &BTreeMap<String, String>) -> String {
    captures.iter().fold(template.to_string(), |acc, (k, v)| {
        acc.replace(&format!("{{{k}}}"), v)
    })
}

fn substitute_value(value: &Value, captures: &BTreeMap<String, String>) -> Value {
    match value {
        Value::String(s) => Value::String(substitute(s, captures)),
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|v| substitute_value(v, captures))
                .collect(),
        ),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (substitute(k, captures), substitute_value(v, captures)))
                .collect(),
        ),
        other => other.clone(),
    }
}
