//! The ReAct agent loop.
//!
//! Context is retrieved once per episode. Each iteration renders the prompt,
//! asks the model for the next turn (stopping before any `Observation:`),
//! parses it, invokes the named tool and appends the Observation. Every
//! failure ends up in the trace's status; `run` itself never fails.

pub mod grammar;
pub mod tracelog;
pub mod prompt;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Map;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use grammar::{parse_model_output, parse_params, parse_steps, serialize_steps, ParseError, TraceStep};
pub use prompt::{render_prompt, AgentConfig, DEFAULT_TEMPLATE};

use crate::gateway::{CompletionRequest, Gateway};
use crate::kg::ContextBundle;
use crate::memory::{MemoryBackend, MemoryKind};
use crate::tools::{ApiClient, ToolError, ToolRegistry};

pub const STOP_SEQUENCE: &str = "Observation:";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent config error: {0}")]
    Config(String),
    #[error(transparent)]
    Tools(#[from] ToolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Completed,
    StepLimit,
    ParseError,
    GatewayError,
}

impl TraceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceStatus::Completed => "completed",
            TraceStatus::StepLimit => "step_limit",
            TraceStatus::ParseError => "parse_error",
            TraceStatus::GatewayError => "gateway_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    pub query: String,
    pub memory_kind: MemoryKind,
    pub steps: Vec<TraceStep>,
    pub status: TraceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Milliseconds spent producing each step, aligned with `steps`.
    pub timing: Vec<u64>,
}

impl Trace {
    pub fn first_action(&self) -> Option<(usize, &str)> {
        self.steps.iter().enumerate().find_map(|(i, s)| match s {
            TraceStep::Action { tool_name } => Some((i, tool_name.as_str())),
            _ => None,
        })
    }

    /// The Action Input directly following step `action_index`.
    pub fn input_after(&self, action_index: usize) -> Option<&TraceStep> {
        self.steps.get(action_index + 1).filter(|s| matches!(s, TraceStep::ActionInput { .. }))
    }

    pub fn observation_after(&self, action_index: usize) -> Option<&str> {
        self.steps[action_index..].iter().find_map(|s| match s {
            TraceStep::Observation { text } => Some(text.as_str()),
            _ => None,
        })
    }

    pub fn thought(&self, index: usize) -> Option<&str> {
        self.steps.iter().find_map(|s| match s {
            TraceStep::Thought { index: i, text } if *i == index => Some(text.as_str()),
            _ => None,
        })
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.steps.iter().rev().find_map(|s| match s {
            TraceStep::FinalAnswer { text } => Some(text.as_str()),
            _ => None,
        })
    }

    pub fn action_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, TraceStep::Action { .. })).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

/// Checks `(Thought, Action, ActionInput, Observation)* Thought? FinalAnswer`
/// with thought indices 1..n. With `complete` false, any prefix is accepted.
pub fn check_grammar(steps: &[TraceStep], complete: bool) -> Result<(), String> {
    // States: 0 expect Thought or FinalAnswer, 1 expect Action or FinalAnswer,
    // 2 expect ActionInput, 3 expect Observation, 4 done.
    let mut state = 0;
    let mut thoughts = 0;
    for (i, step) in steps.iter().enumerate() {
        state = match (state, step) {
            (0, TraceStep::Thought { index, .. }) => {
                thoughts += 1;
                if *index != thoughts {
                    return Err(format!("step {i}: thought index {index}, expected {thoughts}"));
                }
                1
            }
            (0 | 1, TraceStep::FinalAnswer { .. }) => 4,
            (1, TraceStep::Action { .. }) => 2,
            (2, TraceStep::ActionInput { .. }) => 3,
            (3, TraceStep::Observation { .. }) => 0,
            (_, s) => return Err(format!("step {i}: unexpected {}", s.kind())),
        };
    }
    if complete && state != 4 {
        return Err("trace does not end with a final answer".into());
    }
    Ok(())
}

/// Deterministic trace id for one episode.
pub fn trace_id(kind: MemoryKind, query: &str, nonce: &str) -> String {
    let mut h = Sha256::new();
    for part in [kind.as_str(), query, nonce] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    format!("tr-{}", &hex::encode(h.finalize())[..16])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timer {
    Wall,
    /// Records every duration as 0 so traces are byte-stable.
    Zero,
}

impl Timer {
    fn elapsed(self, since: Instant) -> u64 {
        match self {
            Timer::Wall => since.elapsed().as_millis() as u64,
            Timer::Zero => 0,
        }
    }
}

pub struct Agent {
    memory: Arc<dyn MemoryBackend>,
    registry: Arc<ToolRegistry>,
    client: Arc<dyn ApiClient>,
    gateway: Arc<Gateway>,
    config: AgentConfig,
    tools_text: String,
    timer: Timer,
}

impl Agent {
    pub fn new(
        memory: Arc<dyn MemoryBackend>,
        registry: Arc<ToolRegistry>,
        client: Arc<dyn ApiClient>,
        gateway: Arc<Gateway>,
        config: AgentConfig,
    ) -> Result<Self, AgentError> {
        config.check()?;
        let tools_text = registry.describe(config.tools_budget)?;
        Ok(Self { memory, registry, client, gateway, config, tools_text, timer: Timer::Zero })
    }

    pub fn with_timer(mut self, timer: Timer) -> Self {
        self.timer = timer;
        self
    }

    pub fn memory_kind(&self) -> MemoryKind {
        self.memory.kind()
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    fn request(&self, query: &str, context: &ContextBundle, steps: &[TraceStep]) -> Result<CompletionRequest, AgentError> {
        let messages = render_prompt(&self.config, query, context, &self.tools_text, &serialize_steps(steps))?;
        Ok(CompletionRequest::new(messages).with_stop(&[STOP_SEQUENCE]).with_max_tokens(self.config.max_tokens))
    }

    /// The completion request the episode for `query` would send after
    /// `steps`; the first request when `steps` is empty.
    pub fn request_after(&self, query: &str, steps: &[TraceStep]) -> Result<CompletionRequest, AgentError> {
        self.request(query, &self.memory.retrieve(query, self.config.context_budget), steps)
    }

    pub fn run(&self, query: &str, id: &str) -> Trace {
        self.run_with(query, id, &mut |_, _| {})
    }

    /// Runs one episode, reporting each step to `on_step` as it is appended.
    pub fn run_with(&self, query: &str, id: &str, on_step: &mut dyn FnMut(&TraceStep, u64)) -> Trace {
        let mut trace = Trace {
            id: id.to_string(),
            query: query.to_string(),
            memory_kind: self.memory.kind(),
            steps: Vec::new(),
            status: TraceStatus::StepLimit,
            error: None,
            timing: Vec::new(),
        };
        let mut push = |trace: &mut Trace, step: TraceStep, ms: u64| {
            on_step(&step, ms);
            trace.steps.push(step);
            trace.timing.push(ms);
        };
        let context = self.memory.retrieve(query, self.config.context_budget);
        let mut thoughts = 0;
        for _ in 0..self.config.max_steps {
            let request = match self.request(query, &context, &trace.steps) {
                Ok(r) => r,
                Err(e) => return fail(trace, TraceStatus::ParseError, e.to_string()),
            };
            let started = Instant::now();
            let raw = match self.gateway.complete(&request) {
                Ok(r) => r,
                Err(e) => return fail(trace, TraceStatus::GatewayError, e.to_string()),
            };
            let llm_ms = self.timer.elapsed(started);
            let steps = match parse_model_output(cut_at_stop(&raw)) {
                Ok(s) => s,
                Err(e) => return fail(trace, TraceStatus::ParseError, e.to_string()),
            };
            let turn = Turn::from_steps(steps);
            thoughts += 1;
            push(&mut trace, TraceStep::thought(thoughts, turn.thought), llm_ms);
            match turn.kind {
                TurnKind::Final(text) => {
                    push(&mut trace, TraceStep::final_answer(text), 0);
                    trace.status = TraceStatus::Completed;
                    return trace;
                }
                TurnKind::Act { tool, input } => {
                    let parsed = match &input {
                        TraceStep::ActionInput { parsed, .. } => parsed.clone(),
                        _ => None,
                    };
                    push(&mut trace, TraceStep::action(tool.clone()), 0);
                    push(&mut trace, input, 0);
                    let started = Instant::now();
                    let observation = match parsed {
                        Some(params) => self.registry.invoke(&tool, &params, self.client.as_ref()).observation(),
                        None if !self.registry.contains(&tool) => {
                            self.registry.invoke(&tool, &Map::new(), self.client.as_ref()).observation()
                        }
                        None => "Error: Action Input must be a JSON object of parameters".to_string(),
                    };
                    let ms = self.timer.elapsed(started);
                    push(&mut trace, TraceStep::observation(observation), ms);
                }
            }
        }
        trace.error = Some(format!("no final answer within {} steps", self.config.max_steps));
        trace
    }
}

/// Backends that ignore the stop sequence may invent an observation; the
/// text from that line on is discarded, as a stop sequence would have.
fn cut_at_stop(raw: &str) -> &str {
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if line.trim_start().starts_with(STOP_SEQUENCE) {
            return &raw[..offset];
        }
        offset += line.len();
    }
    raw
}

fn fail(mut trace: Trace, status: TraceStatus, error: String) -> Trace {
    trace.status = status;
    trace.error = Some(error);
    trace
}

enum TurnKind {
    Act { tool: String, input: TraceStep },
    Final(String),
}

/// One model turn normalized to the trace grammar: hallucinated
/// observations and everything after them are dropped, multiple thoughts
/// are merged, only the first action is kept and a missing action input
/// becomes an empty one.
struct Turn {
    thought: String,
    kind: TurnKind,
}

impl Turn {
    fn from_steps(steps: Vec<TraceStep>) -> Self {
        let mut thoughts = Vec::new();
        let mut action: Option<String> = None;
        let mut input: Option<TraceStep> = None;
        let mut final_answer = None;
        for step in steps {
            match step {
                TraceStep::Observation { .. } => break,
                TraceStep::Thought { text, .. } if action.is_none() && final_answer.is_none() => {
                    if !text.is_empty() {
                        thoughts.push(text)
                    }
                }
                TraceStep::Action { tool_name } if action.is_none() => action = Some(tool_name),
                s @ TraceStep::ActionInput { .. } if action.is_some() && input.is_none() => input = Some(s),
                TraceStep::FinalAnswer { text } if final_answer.is_none() => final_answer = Some(text),
                _ => {}
            }
        }
        let kind = match (action, final_answer) {
            (Some(tool), _) => TurnKind::Act { tool, input: input.unwrap_or_else(|| TraceStep::action_input("")) },
            (None, Some(text)) => TurnKind::Final(text),
            // parse_model_output guarantees one of the two, unless the only
            // one sits after a hallucinated observation.
            (None, None) => TurnKind::Final(String::new()),
        };
        Self { thought: thoughts.join("\n"), kind }
    }
}
