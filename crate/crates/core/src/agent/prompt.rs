//! Prompt rendering.

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::gateway::ChatMessage;
use crate::kg::ContextBundle;

pub const PLACEHOLDERS: [&str; 4] = ["{context}", "{tools}", "{query}", "{scratchpad}"];

pub const DEFAULT_TEMPLATE: &str = "You are a meteorological data assistant. Answer the question by calling one of the data tools below.

{context}

Tools:
{tools}

Use exactly this format:
Thought: what the question asks and which tool fits
Action: the tool name, exactly as listed above
Action Input: a JSON object with the tool parameters
Observation: the tool result
(Thought, Action, Action Input and Observation may repeat)
Thought: I now know the answer
Final Answer: the answer, quoting the returned values

Question: {query}
{scratchpad}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_steps: usize,
    pub context_budget: usize,
    pub tools_budget: usize,
    pub max_tokens: u32,
    pub prompt_template: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: 6,
            context_budget: 400,
            tools_budget: 8000,
            max_tokens: 512,
            prompt_template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl AgentConfig {
    pub fn check(&self) -> Result<(), AgentError> {
        if self.max_steps == 0 {
            return Err(AgentError::Config("max_steps must be at least 1".into()));
        }
        let missing: Vec<&str> = PLACEHOLDERS.iter().copied().filter(|p| !self.prompt_template.contains(p)).collect();
        if !missing.is_empty() {
            return Err(AgentError::Config(format!("prompt template lacks {}", missing.join(", "))));
        }
        Ok(())
    }
}

/// A single system message. Empty context drops the knowledge section.
pub fn render_prompt(
    config: &AgentConfig,
    query: &str,
    context: &ContextBundle,
    tools_text: &str,
    scratchpad: &str,
) -> Result<Vec<ChatMessage>, AgentError> {
    config.check()?;
    let knowledge = if context.is_empty() { String::new() } else { format!("Knowledge:\n{}", context.rendered) };
    // Substitute in one pass so placeholder-like text inside values is left alone.
    let mut out = String::with_capacity(config.prompt_template.len() + tools_text.len() + knowledge.len());
    let mut rest = config.prompt_template.as_str();
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let value = [
            ("{context}", knowledge.as_str()),
            ("{tools}", tools_text),
            ("{query}", query),
            ("{scratchpad}", scratchpad),
        ]
        .into_iter()
        .find(|(p, _)| tail.starts_with(p));
        match value {
            Some((p, v)) => {
                out.push_str(v);
                rest = &tail[p.len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    if knowledge.is_empty() {
        while out.contains("\n\n\n") {
            out = out.replace("\n\n\n", "\n\n");
        }
    }
    Ok(vec![ChatMessage::system(out)])
}
