//! The ReAct step grammar shared by prompts, model output and traces.
//!
//! A step starts on a line whose first non-blank text is one of the labels
//! `Thought:`, `Action:`, `Action Input:`, `Observation:` or `Final Answer:`.
//! Following lines without a label continue the current step. Text before
//! the first label is treated as a thought.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceStep {
    Thought { index: usize, text: String },
    Action { tool_name: String },
    ActionInput { params_text: String, parsed: Option<Map<String, Value>> },
    Observation { text: String },
    FinalAnswer { text: String },
}

impl TraceStep {
    pub fn thought(index: usize, text: impl Into<String>) -> Self {
        TraceStep::Thought { index, text: text.into() }
    }

    pub fn action(tool_name: impl Into<String>) -> Self {
        TraceStep::Action { tool_name: tool_name.into() }
    }

    /// Action input whose `parsed` field is derived from the text.
    pub fn action_input(params_text: impl Into<String>) -> Self {
        let params_text = params_text.into();
        let parsed = parse_params(&params_text);
        TraceStep::ActionInput { params_text, parsed }
    }

    pub fn observation(text: impl Into<String>) -> Self {
        TraceStep::Observation { text: text.into() }
    }

    pub fn final_answer(text: impl Into<String>) -> Self {
        TraceStep::FinalAnswer { text: text.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TraceStep::Thought { .. } => "thought",
            TraceStep::Action { .. } => "action",
            TraceStep::ActionInput { .. } => "action_input",
            TraceStep::Observation { .. } => "observation",
            TraceStep::FinalAnswer { .. } => "final_answer",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TraceStep::Thought { .. } => "Thought",
            TraceStep::Action { .. } => "Action",
            TraceStep::ActionInput { .. } => "Action Input",
            TraceStep::Observation { .. } => "Observation",
            TraceStep::FinalAnswer { .. } => "Final Answer",
        }
    }

    pub fn text(&self) -> &str {
        match self {
            TraceStep::Thought { text, .. } | TraceStep::Observation { text } | TraceStep::FinalAnswer { text } => text,
            TraceStep::Action { tool_name } => tool_name,
            TraceStep::ActionInput { params_text, .. } => params_text,
        }
    }

    /// `Label: text`, the form used in prompts and scratchpads.
    pub fn render(&self) -> String {
        let text = self.text();
        if text.is_empty() {
            format!("{}:", self.label())
        } else {
            format!("{}: {}", self.label(), text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("model output contains both an Action and a Final Answer")]
    Ambiguous,
    #[error("model output contains neither an Action nor a Final Answer")]
    NoStep,
}

pub fn serialize_steps(steps: &[TraceStep]) -> String {
    steps.iter().map(TraceStep::render).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Copy, PartialEq)]
enum Label {
    Thought,
    Action,
    ActionInput,
    Observation,
    FinalAnswer,
}

/// Splits a line into its label and the remaining text. `Thought 2:` and
/// `Thought2:` are accepted as thought labels.
fn split_label(line: &str) -> Option<(Label, &str)> {
    let line = line.trim_start();
    // Longer labels first: "Action Input:" also starts with "Action".
    for (prefix, label) in [
        ("Action Input:", Label::ActionInput),
        ("Action:", Label::Action),
        ("Observation:", Label::Observation),
        ("Final Answer:", Label::FinalAnswer),
    ] {
        if let Some(rest) = line.strip_prefix(prefix) {
            return Some((label, rest));
        }
    }
    let rest = line.strip_prefix("Thought")?;
    let rest = rest.trim_start_matches(' ').trim_start_matches(|c: char| c.is_ascii_digit());
    rest.strip_prefix(':').map(|r| (Label::Thought, r))
}

/// Parses every labeled segment in textual order. Thought indices count
/// from 1. Never fails.
pub fn parse_steps(text: &str) -> Vec<TraceStep> {
    let mut segments: Vec<(Label, String)> = Vec::new();
    let mut preamble = String::new();
    for line in text.lines() {
        match split_label(line) {
            Some((label, rest)) => segments.push((label, rest.to_string())),
            None => match segments.last_mut() {
                Some((_, body)) => {
                    body.push('\n');
                    body.push_str(line);
                }
                None => {
                    preamble.push_str(line);
                    preamble.push('\n');
                }
            },
        }
    }
    if !preamble.trim().is_empty() {
        segments.insert(0, (Label::Thought, preamble));
    }
    let mut thoughts = 0;
    segments
        .into_iter()
        .map(|(label, body)| {
            let body = body.trim().to_string();
            match label {
                Label::Thought => {
                    thoughts += 1;
                    TraceStep::Thought { index: thoughts, text: body }
                }
                Label::Action => TraceStep::Action { tool_name: body },
                Label::ActionInput => TraceStep::action_input(body),
                Label::Observation => TraceStep::Observation { text: body },
                Label::FinalAnswer => TraceStep::FinalAnswer { text: body },
            }
        })
        .collect()
}

/// Parses one model completion, rejecting outputs that are both an action
/// and an answer, or neither.
pub fn parse_model_output(text: &str) -> Result<Vec<TraceStep>, ParseError> {
    let steps = parse_steps(text);
    let has_action = steps.iter().any(|s| matches!(s, TraceStep::Action { .. }));
    let has_final = steps.iter().any(|s| matches!(s, TraceStep::FinalAnswer { .. }));
    match (has_action, has_final) {
        (true, true) => Err(ParseError::Ambiguous),
        (false, false) => Err(ParseError::NoStep),
        _ => Ok(steps),
    }
}

/// Lenient JSON-object capture: code fences and text around the outermost
/// braces are ignored. Anything that is not an object yields `None`.
pub fn parse_params(text: &str) -> Option<Map<String, Value>> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    match serde_json::from_str::<Value>(&text[start..=end]) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}
