//! An agent's conversation: append-only, with deferred system notes while a
//! tool call is open and coalesced world updates.

use crate::backend::{ChatMessage, Role};
use crate::world::Facts;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentHistory {
    pub agent: String,
    messages: Vec<ChatMessage>,
    /// Call id of an assistant tool call still waiting for its result.
    open_call: Option<String>,
    /// System notes that arrived while a call was open.
    deferred: Vec<ChatMessage>,
    /// Facts the agent has already been told about.
    told: Facts,
    /// Latest facts not yet told; replaced by every newer snapshot.
    pending: Option<Facts>,
}

impl AgentHistory {
    pub fn new(agent: &str, system_prompt: String, facts: Facts, now: f64) -> Self {
        Self {
            agent: agent.to_string(),
            messages: vec![ChatMessage::system(system_prompt, now)],
            open_call: None,
            deferred: Vec::new(),
            told: facts,
            pending: None,
        }
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn open_call(&self) -> Option<&str> {
        self.open_call.as_deref()
    }

    pub fn push_user(&mut self, text: &str, now: f64) {
        debug_assert!(
            self.open_call.is_none(),
            "user message while a tool call is open"
        );
        self.messages.push(ChatMessage::user(text, now));
    }

    pub fn push_assistant_text(&mut self, text: &str, now: f64) {
        debug_assert!(self.open_call.is_none());
        self.messages.push(ChatMessage::assistant(text, now));
    }

    pub fn push_assistant_call(&mut self, call: crate::actions::ToolCall, now: f64) {
        debug_assert!(self.open_call.is_none());
        self.open_call = Some(call.id.clone());
        self.messages.push(ChatMessage::assistant_call(call, now));
    }

    /// Closes the open call with its result, then releases deferred notes.
    pub fn push_tool_result(&mut self, call_id: &str, text: &str, now: f64) {
        if self.open_call.as_deref() != Some(call_id) {
            debug_assert!(false, "tool result for {call_id} without an open call");
            return;
        }
        self.open_call = None;
        self.messages
            .push(ChatMessage::tool_result(call_id, text, now));
        self.messages.append(&mut self.deferred);
    }

    /// A system note. Held back while a tool call is open so the call stays
    /// directly followed by its result.
    pub fn push_system(&mut self, text: &str, now: f64) {
        let m = ChatMessage::system(text, now);
        if self.open_call.is_some() {
            self.deferred.push(m);
        } else {
            self.messages.push(m);
        }
    }

    /// Records the newest world facts. Nothing is appended until the next
    /// flush, so several changes coalesce into one message.
    pub fn note_world(&mut self, facts: Facts) {
        if facts == self.told {
            self.pending = None;
        } else {
            self.pending = Some(facts);
        }
    }

    pub fn has_pending_world(&self) -> bool {
        self.pending.is_some()
    }

    /// Appends one system message with everything that changed since the
    /// last flush. Returns whether a message was added.
    pub fn flush_world(&mut self, now: f64) -> bool {
        if self.open_call.is_some() {
            return false;
        }
        let Some(facts) = self.pending.take() else {
            return false;
        };
        let changed: Vec<&str> = facts
            .iter()
            .filter(|(k, v)| self.told.get(*k) != Some(*v))
            .map(|(_, v)| v.as_str())
            .collect();
        let added = !changed.is_empty();
        if added {
            let text = format!("World update: {}", changed.join(" "));
            self.messages.push(ChatMessage::system(text, now));
        }
        self.told = facts;
        added
    }

    /// The messages sent to the backend: the briefing plus as many of the
    /// newest messages as fit in `cap`. The tail never starts with a tool
    /// result whose call was cut off.
    pub fn window(&self, cap: usize) -> Vec<ChatMessage> {
        let cap = cap.max(2);
        if self.messages.len() <= cap {
            return self.messages.clone();
        }
        let mut start = self.messages.len() - (cap - 1);
        while start < self.messages.len() && self.messages[start].role == Role::Tool {
            start += 1;
        }
        let mut out = Vec::with_capacity(cap);
        out.push(self.messages[0].clone());
        out.extend_from_slice(&self.messages[start..]);
        out
    }

    /// Checks the structural rules: a leading system briefing; every
    /// assistant tool call directly followed by its result (or still open at
    /// the end); every tool result answering the call right before it.
    pub fn check(&self) -> Result<(), String> {
        check_messages(&self.messages, self.open_call.as_deref())
    }
}

pub fn check_messages(messages: &[ChatMessage], open_call: Option<&str>) -> Result<(), String> {
    match messages.first() {
        Some(m) if m.role == Role::System => {}
        _ => return Err("history must start with the system briefing".into()),
    }
    for (i, m) in messages.iter().enumerate() {
        match m.role {
            Role::Assistant => {
                if let Some(call) = &m.tool_call {
                    match messages.get(i + 1) {
                        Some(next)
                            if next.role == Role::Tool
                                && next.tool_call_ref.as_deref() == Some(call.id.as_str()) => {}
                        None if open_call == Some(call.id.as_str()) => {}
                        other => {
                            return Err(format!(
                                "tool call {} at {i} is followed by {:?}",
                                call.id,
                                other.map(|m| m.role)
                            ))
                        }
                    }
                }
            }
            Role::Tool => {
                let prev = i.checked_sub(1).and_then(|p| messages.get(p));
                let answers = prev
                    .and_then(|p| p.tool_call.as_ref())
                    .is_some_and(|c| Some(c.id.as_str()) == m.tool_call_ref.as_deref());
                if !answers {
                    return Err(format!(
                        "tool result at {i} does not answer the preceding call"
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(())
}
