//! Evaluation: instruction cases, trace classification, metrics, reports.

pub mod ablation;
pub mod faults;
pub mod fisher;
pub mod metrics;
pub mod pairs;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use ablation::{run_ablation, AblationRun, AblationSetup};
pub use fisher::fisher_exact;
pub use metrics::{
    compute_metrics, percent, render_report, significance, Counts, EvalReport, Metric, Rate, SignificanceMark, System,
};

use crate::agent::{Trace, TraceStep};
use crate::catalog::{ParamSpec, ValueKind};
use crate::memory::MemoryKind;
use crate::text::{contains_stem_sequence, normalize_name, stems};
use crate::tools::ToolRegistry;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("case file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("case {case}: unknown gold tool {tool}")]
    UnknownTool { case: String, tool: String },
    #[error("case {case}: instruction mentions api name {name}")]
    LeaksName { case: String, name: String },
    #[error("duplicate case id {0}")]
    DuplicateId(String),
    #[error("trace {trace} does not belong to case {case}")]
    CaseMismatch { trace: String, case: String },
    #[error("no results to aggregate")]
    Empty,
    #[error("missing cassette for system {system}, case {case}")]
    MissingCassette { system: MemoryKind, case: String },
    #[error("episode for system {system}, case {case} failed: {message}")]
    Episode { system: MemoryKind, case: String, message: String },
    #[error("pair generation exhausted for api {api}: {reason}")]
    GenerationExhausted { api: String, reason: String },
    #[error("gateway error: {0}")]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Explicit,
    Implicit,
}

impl Style {
    pub fn as_str(self) -> &'static str {
        match self {
            Style::Explicit => "explicit",
            Style::Implicit => "implicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionCase {
    pub id: String,
    pub instruction: String,
    pub style: Style,
    pub gold_tool: String,
    pub gold_params: Map<String, Value>,
    pub intent_tags: BTreeSet<String>,
    pub answer_fields: Vec<String>,
}

/// True when `text` mentions `name` once separators and case are ignored.
pub fn mentions_name(text: &str, name: &str) -> bool {
    let name = normalize_name(name);
    if name.is_empty() {
        return false;
    }
    let text = format!(" {} ", normalize_name(text));
    text.contains(&format!(" {name} "))
}

pub fn check_case(case: &InstructionCase, registry: &ToolRegistry) -> Result<(), EvalError> {
    let tool = registry
        .get(&case.gold_tool)
        .ok_or_else(|| EvalError::UnknownTool { case: case.id.clone(), tool: case.gold_tool.clone() })?;
    for name in [&tool.name, &tool.bound_api] {
        if mentions_name(&case.instruction, name) {
            return Err(EvalError::LeaksName { case: case.id.clone(), name: name.clone() });
        }
    }
    Ok(())
}

pub fn parse_cases(text: &str, registry: &ToolRegistry) -> Result<Vec<InstructionCase>, EvalError> {
    let mut cases = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: InstructionCase =
            serde_json::from_str(line).map_err(|e| EvalError::Parse { line: i + 1, message: e.to_string() })?;
        check_case(&case, registry)?;
        if !ids.insert(case.id.clone()) {
            return Err(EvalError::DuplicateId(case.id));
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_cases(path: impl AsRef<Path>, registry: &ToolRegistry) -> Result<Vec<InstructionCase>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_cases(&text, registry)
}

pub fn cases_to_jsonl(cases: &[InstructionCase]) -> String {
    cases.iter().map(|c| serde_json::to_string(c).expect("case serializes") + "\n").collect()
}

/// Tools that lack exactly one explicit and one implicit case.
pub fn unbalanced_tools(cases: &[InstructionCase], registry: &ToolRegistry) -> Vec<String> {
    let mut seen: BTreeMap<&str, Vec<Style>> = BTreeMap::new();
    for c in cases {
        seen.entry(c.gold_tool.as_str()).or_default().push(c.style);
    }
    registry
        .tools()
        .iter()
        .filter(|t| {
            let mut styles = seen.get(t.name.as_str()).cloned().unwrap_or_default();
            styles.sort();
            styles != [Style::Explicit, Style::Implicit]
        })
        .map(|t| t.name.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub intent_fail: bool,
    pub name_fail: bool,
    pub param_fail: bool,
    pub hallucination: bool,
    pub answer_fail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Correct,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub flags: Flags,
    pub correct_call: bool,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
enum Norm {
    Num(f64),
    Str(String),
    Other(String),
}

/// Loose date forms (`2024-7-1`, `2024/07/01`) to `YYYY-MM-DD`.
fn canonical_date(s: &str) -> Option<String> {
    let parts: Vec<&str> = s.split(['-', '/', '.']).collect();
    let [y, m, d] = parts.as_slice() else { return None };
    let (y, m, d): (u32, u32, u32) = (y.parse().ok()?, m.parse().ok()?, d.parse().ok()?);
    (y >= 1000 && (1..=12).contains(&m) && (1..=31).contains(&d)).then(|| format!("{y:04}-{m:02}-{d:02}"))
}

fn normalize_value(v: &Value, kind: Option<ValueKind>) -> Norm {
    match (v, kind) {
        (Value::String(s), Some(ValueKind::Date)) => Norm::Str(canonical_date(s.trim()).unwrap_or_else(|| s.trim().to_string())),
        (Value::String(s), Some(k)) if k.is_numeric() => match s.trim().parse::<f64>() {
            Ok(x) => Norm::Num(x),
            Err(_) => Norm::Str(s.trim().to_string()),
        },
        (Value::String(s), _) => Norm::Str(s.trim().to_string()),
        (Value::Number(n), Some(ValueKind::String)) => Norm::Str(crate::canonical::canonical_number(n)),
        (Value::Number(n), _) => Norm::Num(n.as_f64().unwrap_or(f64::NAN)),
        (other, _) => Norm::Other(crate::canonical::canonical_json(other)),
    }
}

/// Key order ignored, nulls dropped, strings trimmed, numbers compared by
/// value and dates canonicalized. Values are read through the declared
/// parameter kinds when known, so `"10"` and `10` match for an integer.
pub fn params_match(actual: &Map<String, Value>, gold: &Map<String, Value>, specs: &[ParamSpec]) -> bool {
    let kind_of = |k: &str| specs.iter().find(|p| p.name == k).map(|p| p.kind);
    let norm = |m: &Map<String, Value>| -> BTreeMap<String, Norm> {
        m.iter()
            .filter(|(_, v)| !v.is_null())
            .map(|(k, v)| (k.trim().to_string(), normalize_value(v, kind_of(k.trim()))))
            .collect()
    };
    norm(actual) == norm(gold)
}

/// Looks up `field` (or `series.stat`) in an Observation object.
pub fn observed_value<'a>(observation: &'a Value, field: &str) -> Option<&'a Value> {
    if let Some(v) = observation.get(field) {
        return Some(v);
    }
    let (series, stat) = field.split_once('.')?;
    observation.get("stats")?.get(series)?.get(stat)
}

fn numbers_in(text: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() || c == '.' || (c == '-' && current.is_empty()) {
            current.push(c);
        } else if !current.is_empty() {
            if let Ok(x) = current.trim_end_matches('.').parse::<f64>() {
                out.push(x);
            }
            current.clear();
        }
    }
    out
}

/// Whether the answer surfaces `value`: numbers by value, text as a
/// whole-word, case-insensitive match.
pub fn answer_contains(answer: &str, value: &Value) -> bool {
    match value {
        Value::Number(n) => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            numbers_in(answer).iter().any(|y| (x - y).abs() <= 1e-9)
        }
        Value::String(s) => {
            let needle = normalize_name(s);
            !needle.is_empty() && format!(" {} ", normalize_name(answer)).contains(&format!(" {needle} "))
        }
        Value::Bool(b) => normalize_name(answer).split(' ').any(|w| w == b.to_string()),
        Value::Null => false,
        other => answer.contains(&crate::canonical::canonical_json(other)),
    }
}

/// Scores the trace's first Action and Action Input against the case.
pub fn classify_case(trace: &Trace, case: &InstructionCase, registry: &ToolRegistry) -> Result<CaseResult, EvalError> {
    if trace.query != case.instruction {
        return Err(EvalError::CaseMismatch { trace: trace.id.clone(), case: case.id.clone() });
    }
    let mut flags = Flags::default();
    let thought = stems(trace.thought(1).unwrap_or(""));
    flags.intent_fail = !case.intent_tags.iter().any(|tag| contains_stem_sequence(&thought, &stems(tag)));

    let mut correct_call = false;
    let mut observation = None;
    match trace.first_action() {
        None => flags.name_fail = true,
        Some((_, name)) if !registry.contains(name) => flags.hallucination = true,
        Some((_, name)) if name != case.gold_tool => flags.name_fail = true,
        Some((i, name)) => {
            let specs = &registry.get(name).expect("registered").params;
            let matched = match trace.input_after(i) {
                Some(TraceStep::ActionInput { parsed: Some(p), .. }) => params_match(p, &case.gold_params, specs),
                _ => false,
            };
            flags.param_fail = !matched;
            observation = trace
                .observation_after(i)
                .and_then(|o| serde_json::from_str::<Value>(o).ok())
                .filter(Value::is_object);
            correct_call = matched && observation.is_some();
        }
    }
    if correct_call {
        let obs = observation.expect("correct call has an observation");
        flags.answer_fail = match trace.final_answer() {
            None => true,
            Some(answer) => !case
                .answer_fields
                .iter()
                .all(|f| observed_value(&obs, f).is_some_and(|v| answer_contains(answer, v))),
        };
    }
    let outcome = if correct_call && !flags.answer_fail { Outcome::Correct } else { Outcome::Failed };
    Ok(CaseResult { case_id: case.id.clone(), flags, correct_call, outcome })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::agent::TraceStatus;
    use crate::catalog::{ApiSpec, Catalog, Category, FieldSpec};
    use serde_json::json;
    use std::sync::Arc;

    pub(crate) fn registry() -> ToolRegistry {
        let param = |name: &str, kind| ParamSpec { name: name.into(), kind, units: None, required: true, allowed_values: None, range: None };
        let field = |name: &str| FieldSpec { name: name.into(), kind: ValueKind::Number, units: None, range: None, element: None, length: None, allowed_values: None };
        let api = |name: &str| ApiSpec {
            name: name.into(),
            description: "d".into(),
            category: Category::Precipitation,
            params: vec![param("station", ValueKind::String), param("date", ValueKind::Date)],
            output_fields: vec![field("total")],
        };
        ToolRegistry::from_catalog(Arc::new(Catalog::new(vec![api("get_daily_precipitation"), api("get_wind_speed")]).unwrap())).unwrap()
    }

    pub(crate) fn case() -> InstructionCase {
        InstructionCase {
            id: "c1".into(),
            instruction: "How much rain fell at S1 on 2024-07-01?".into(),
            style: Style::Explicit,
            gold_tool: "get_daily_precipitation".into(),
            gold_params: json!({"station": "S1", "date": "2024-07-01"}).as_object().unwrap().clone(),
            intent_tags: ["precipitation".to_string(), "rain".to_string()].into(),
            answer_fields: vec!["total".into()],
        }
    }

    pub(crate) fn trace(tool: &str, input: &str, observation: &str, answer: &str) -> Trace {
        Trace {
            id: "t".into(),
            query: case().instruction,
            memory_kind: MemoryKind::Kg,
            steps: vec![
                TraceStep::thought(1, "the user wants daily precipitation"),
                TraceStep::action(tool),
                TraceStep::action_input(input),
                TraceStep::observation(observation),
                TraceStep::thought(2, ""),
                TraceStep::final_answer(answer),
            ],
            status: TraceStatus::Completed,
            error: None,
            timing: vec![0; 6],
        }
    }

    const GOLD_INPUT: &str = r#"{"date": "2024-7-1", "station": " S1 "}"#;

    #[test]
    fn correct_call() {
        let r = classify_case(&trace("get_daily_precipitation", GOLD_INPUT, r#"{"total":12.5}"#, "12.5 mm fell"), &case(), &registry()).unwrap();
        assert_eq!(r.flags, Flags::default());
        assert!(r.correct_call);
        assert_eq!(r.outcome, Outcome::Correct);
    }

    #[test]
    fn fictitious_tool_is_hallucination_not_name_failure() {
        let r = classify_case(&trace("get_rainfall_magic", GOLD_INPUT, "Error: unknown tool", "?"), &case(), &registry()).unwrap();
        assert!(r.flags.hallucination && !r.flags.name_fail && !r.correct_call);
    }

    #[test]
    fn real_wrong_tool_is_name_failure() {
        let r = classify_case(&trace("get_wind_speed", GOLD_INPUT, r#"{"total":1}"#, "1"), &case(), &registry()).unwrap();
        assert!(r.flags.name_fail && !r.flags.hallucination);
        assert_eq!(r.outcome, Outcome::Failed);
    }

    #[test]
    fn no_action_is_name_failure() {
        let mut t = trace("x", "{}", "o", "a");
        t.steps = vec![TraceStep::thought(1, "rain"), TraceStep::final_answer("no idea")];
        let r = classify_case(&t, &case(), &registry()).unwrap();
        assert!(r.flags.name_fail);
    }

    #[test]
    fn wrong_params_and_missing_answer() {
        let r = classify_case(
            &trace("get_daily_precipitation", r#"{"station": "S2", "date": "2024-07-01"}"#, r#"{"total":3}"#, "3"),
            &case(),
            &registry(),
        )
        .unwrap();
        assert!(r.flags.param_fail && !r.correct_call);
        let r = classify_case(&trace("get_daily_precipitation", GOLD_INPUT, r#"{"total":12.5}"#, "some rain fell"), &case(), &registry()).unwrap();
        assert!(r.correct_call && r.flags.answer_fail);
        assert_eq!(r.outcome, Outcome::Failed);
        let r = classify_case(&trace("get_daily_precipitation", GOLD_INPUT, "Error: invalid", "x"), &case(), &registry()).unwrap();
        assert!(!r.correct_call && !r.flags.param_fail);
    }

    #[test]
    fn intent_uses_stems() {
        let mut t = trace("get_daily_precipitation", GOLD_INPUT, r#"{"total":1}"#, "1");
        t.steps[0] = TraceStep::thought(1, "Rains are relevant");
        assert!(!classify_case(&t, &case(), &registry()).unwrap().flags.intent_fail);
        t.steps[0] = TraceStep::thought(1, "wind");
        assert!(classify_case(&t, &case(), &registry()).unwrap().flags.intent_fail);
    }

    #[test]
    fn mismatch_is_error() {
        let mut t = trace("x", "{}", "o", "a");
        t.query = "other".into();
        assert!(matches!(classify_case(&t, &case(), &registry()), Err(EvalError::CaseMismatch { .. })));
    }

    #[test]
    fn case_file_validation() {
        let r = registry();
        let line = |c: &InstructionCase| serde_json::to_string(c).unwrap();
        assert_eq!(parse_cases(&line(&case()), &r).unwrap().len(), 1);
        let mut leak = case();
        leak.instruction = "Call get-daily-precipitation for S1".into();
        assert!(matches!(parse_cases(&line(&leak), &r), Err(EvalError::LeaksName { .. })));
        let mut unknown = case();
        unknown.gold_tool = "nope".into();
        assert!(matches!(parse_cases(&line(&unknown), &r), Err(EvalError::UnknownTool { .. })));
        let vague = line(&case()).replace("\"explicit\"", "\"vague\"");
        assert!(matches!(parse_cases(&vague, &r), Err(EvalError::Parse { line: 1, .. })));
        let dup = format!("{}\n{}", line(&case()), line(&case()));
        assert!(matches!(parse_cases(&dup, &r), Err(EvalError::DuplicateId(_))));
    }

    #[test]
    fn answer_matching() {
        assert!(answer_contains("it was 12.50 mm", &json!(12.5)));
        assert!(!answer_contains("it was 112.5 mm", &json!(12.5)));
        assert!(answer_contains("max -3.2, min -8", &json!(-8)));
        assert!(answer_contains("wind from the NE.", &json!("NE")));
        assert!(!answer_contains("wind from NEW", &json!("NE")));
    }
}
