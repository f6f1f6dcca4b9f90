//! JSON Lines trace log: a header, one record per step, an end record.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentConfig, Trace, TraceStatus, TraceStep};
use crate::memory::MemoryKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header { trace_id: String, query: String, memory_kind: MemoryKind, max_steps: usize, context_budget: usize },
    Step { trace_id: String, seq: usize, kind: String, payload: Value, duration_ms: u64 },
    End {
        trace_id: String,
        status: TraceStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

/// The step's fields without its `kind` tag.
pub fn step_payload(step: &TraceStep) -> Value {
    let mut v = serde_json::to_value(step).expect("step serializes");
    if let Value::Object(m) = &mut v {
        m.remove("kind");
    }
    v
}

pub fn step_from_record(kind: &str, payload: &Value) -> Result<TraceStep, String> {
    let mut v = payload.clone();
    let Value::Object(m) = &mut v else { return Err("step payload is not an object".into()) };
    m.insert("kind".into(), Value::String(kind.into()));
    serde_json::from_value(v).map_err(|e| e.to_string())
}

pub fn records(trace: &Trace, config: &AgentConfig) -> Vec<TraceRecord> {
    let mut out = vec![TraceRecord::Header {
        trace_id: trace.id.clone(),
        query: trace.query.clone(),
        memory_kind: trace.memory_kind,
        max_steps: config.max_steps,
        context_budget: config.context_budget,
    }];
    for (seq, (step, ms)) in trace.steps.iter().zip(&trace.timing).enumerate() {
        out.push(TraceRecord::Step {
            trace_id: trace.id.clone(),
            seq: seq + 1,
            kind: step.kind().into(),
            payload: step_payload(step),
            duration_ms: *ms,
        });
    }
    out.push(TraceRecord::End { trace_id: trace.id.clone(), status: trace.status, error: trace.error.clone() });
    out
}

pub fn to_jsonl(trace: &Trace, config: &AgentConfig) -> String {
    records(trace, config)
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Rebuilds every trace in a log.
pub fn from_jsonl(text: &str) -> Result<Vec<Trace>, String> {
    let mut traces: Vec<Trace> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let record: TraceRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        match record {
            TraceRecord::Header { trace_id, query, memory_kind, .. } => traces.push(Trace {
                id: trace_id,
                query,
                memory_kind,
                steps: Vec::new(),
                status: TraceStatus::StepLimit,
                error: None,
                timing: Vec::new(),
            }),
            TraceRecord::Step { trace_id, kind, payload, duration_ms, .. } => {
                let trace = traces.iter_mut().rev().find(|t| t.id == trace_id).ok_or(format!("line {}: step before header", i + 1))?;
                trace.steps.push(step_from_record(&kind, &payload).map_err(|e| format!("line {}: {e}", i + 1))?);
                trace.timing.push(duration_ms);
            }
            TraceRecord::End { trace_id, status, error } => {
                let trace = traces.iter_mut().rev().find(|t| t.id == trace_id).ok_or(format!("line {}: end before header", i + 1))?;
                trace.status = status;
                trace.error = error;
            }
        }
    }
    Ok(traces)
}

pub fn append(path: impl AsRef<Path>, trace: &Trace, config: &AgentConfig) -> std::io::Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(to_jsonl(trace, config).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_round_trips() {
        let trace = Trace {
            id: "tr-1".into(),
            query: "q".into(),
            memory_kind: MemoryKind::Kg,
            steps: vec![
                TraceStep::thought(1, "t"),
                TraceStep::action("a"),
                TraceStep::action_input("{\"x\": 1}"),
                TraceStep::observation("o"),
                TraceStep::final_answer("f"),
            ],
            status: TraceStatus::Completed,
            error: None,
            timing: vec![3, 0, 0, 1, 0],
        };
        let text = to_jsonl(&trace, &AgentConfig::default());
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().starts_with("{\"record\":\"step\",\"trace_id\":\"tr-1\",\"seq\":1,\"kind\":\"thought\""));
        assert_eq!(from_jsonl(&text).unwrap(), vec![trace]);
    }
}
