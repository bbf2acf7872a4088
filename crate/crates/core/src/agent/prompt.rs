//! Prompt templates with named slots: `{name}`, `{color}`, `{peers}`,
//! `{peer}`, `{peer_count}`, `{language}`, `{world}` and `{roster}`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::world::{describe, AgentProfile, WorldState};

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub agent_briefing: String,
    pub agent_restraints: String,
    pub agent_fewshot: String,
    pub agent_world: String,
    pub controller_briefing: String,
    pub controller_fewshot: String,
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self {
            agent_briefing: include_str!("../../fixtures/prompts/agent_briefing.txt")
                .trim()
                .to_string(),
            agent_restraints: include_str!("../../fixtures/prompts/agent_restraints.txt")
                .trim()
                .to_string(),
            agent_fewshot: include_str!("../../fixtures/prompts/agent_fewshot.txt")
                .trim()
                .to_string(),
            agent_world: include_str!("../../fixtures/prompts/agent_world.txt")
                .trim()
                .to_string(),
            controller_briefing: include_str!("../../fixtures/prompts/controller_briefing.txt")
                .trim()
                .to_string(),
            controller_fewshot: include_str!("../../fixtures/prompts/controller_fewshot.txt")
                .trim()
                .to_string(),
        }
    }

    /// Loads templates from a directory holding the same file names as the
    /// bundled set.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let read = |name: &str| -> std::io::Result<String> {
            Ok(std::fs::read_to_string(dir.join(format!("{name}.txt")))?
                .trim()
                .to_string())
        };
        Ok(Self {
            agent_briefing: read("agent_briefing")?,
            agent_restraints: read("agent_restraints")?,
            agent_fewshot: read("agent_fewshot")?,
            agent_world: read("agent_world")?,
            controller_briefing: read("controller_briefing")?,
            controller_fewshot: read("controller_fewshot")?,
        })
    }
}

pub fn render(template: &str, slots: &BTreeMap<&str, String>) -> String {
    slots.iter().fold(template.to_string(), |acc, (k, v)| {
        acc.replace(&format!("{{{k}}}"), v)
    })
}

/// "Pluto and Neptune", "A, B and C".
pub fn english_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "no", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS
        .get(n)
        .map(|w| w.to_string())
        .unwrap_or_else(|| n.to_string())
}

/// The system prompt of an agent: briefing, restraints, few-shot examples
/// and the world description, in that order.
pub fn agent_system_prompt(
    templates: &PromptTemplates,
    profile: &AgentProfile,
    world: &WorldState,
    language: &str,
) -> String {
    let peers: Vec<String> = world
        .roster()
        .into_iter()
        .filter(|n| n != &profile.name)
        .collect();
    let mut slots = BTreeMap::new();
    slots.insert("name", profile.name.clone());
    slots.insert("color", profile.color.clone());
    slots.insert("peer", peers.first().cloned().unwrap_or_default());
    slots.insert("peers", english_list(&peers));
    slots.insert("peer_count", number_word(peers.len()));
    slots.insert("language", language.to_string());
    slots.insert("world", describe(world, None));
    [
        &templates.agent_briefing,
        &templates.agent_restraints,
        &templates.agent_fewshot,
        &templates.agent_world,
    ]
    .iter()
    .map(|t| render(t, &slots))
    .collect::<Vec<_>>()
    .join("\n\n")
}

pub fn controller_system_prompt(
    templates: &PromptTemplates,
    roster: &[String],
    language: &str,
) -> String {
    let mut slots = BTreeMap::new();
    slots.insert("roster", english_list(roster));
    slots.insert("language", language.to_string());
    [
        &templates.controller_briefing,
        &templates.controller_fewshot,
    ]
    .iter()
    .map(|t| render(t, &slots))
    .collect::<Vec<_>>()
    .join("\n\n")
}
