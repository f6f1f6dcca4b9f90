//! Fault injection into recorded agent cassettes.
//!
//! The first-turn response recorded for a case is rewritten so that its
//! Action names a fictitious tool, names a real but wrong tool, or carries
//! corrupted parameters. Follow-up turns then miss the cassette and must be
//! served by a fallthrough backend.

use serde_json::Value;

use super::{EvalError, InstructionCase};
use crate::agent::{parse_steps, serialize_steps, Agent, TraceStep};
use crate::canonical::canonical_json;
use crate::gateway::{Cassette, CassetteEntry};
use crate::tools::ToolRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    FictitiousTool,
    WrongTool,
    CorruptInput,
}

/// `{gold}_magic`, which must not be registered.
pub fn fictitious_name(gold: &str, registry: &ToolRegistry) -> String {
    let mut name = format!("{gold}_magic");
    while registry.contains(&name) {
        name.push('_');
    }
    name
}

/// The registered tool after `gold` in registration order, wrapping around.
pub fn wrong_tool(gold: &str, registry: &ToolRegistry) -> Option<String> {
    let tools = registry.tools();
    let i = tools.iter().position(|t| t.name == gold)?;
    (1..tools.len()).map(|k| &tools[(i + k) % tools.len()].name).find(|n| *n != gold).cloned()
}

fn corrupt_value(v: &Value) -> Value {
    match v {
        Value::Number(n) => match n.as_i64() {
            Some(i) => Value::from(i + 1),
            None => Value::from(n.as_f64().unwrap_or(0.0) + 1.0),
        },
        Value::String(s) => Value::String(format!("{s}_x")),
        Value::Bool(b) => Value::Bool(!b),
        _ => Value::String("corrupted".into()),
    }
}

/// Rewrites one first-turn response. The first Action (or its input) is
/// replaced; everything else is kept verbatim.
pub fn mutate_response(response: &str, fault: Fault, case: &InstructionCase, registry: &ToolRegistry) -> Result<String, String> {
    let mut steps = parse_steps(response);
    let action = steps
        .iter()
        .position(|s| matches!(s, TraceStep::Action { .. }))
        .ok_or("response has no Action to mutate")?;
    match fault {
        Fault::FictitiousTool => steps[action] = TraceStep::action(fictitious_name(&case.gold_tool, registry)),
        Fault::WrongTool => {
            let wrong = wrong_tool(&case.gold_tool, registry).ok_or("registry has no other tool")?;
            steps[action] = TraceStep::action(wrong);
        }
        Fault::CorruptInput => {
            let input = steps
                .get_mut(action + 1)
                .filter(|s| matches!(s, TraceStep::ActionInput { .. }))
                .ok_or("response has no Action Input to corrupt")?;
            let TraceStep::ActionInput { parsed: Some(params), .. } = input else {
                return Err("Action Input is not a JSON object".into());
            };
            let mut params = params.clone();
            let key = params.keys().next().cloned().ok_or("Action Input has no parameters")?;
            let corrupted = corrupt_value(&params[&key]);
            params.insert(key, corrupted);
            *input = TraceStep::action_input(canonical_json(&Value::Object(params)));
        }
    }
    Ok(serialize_steps(&steps))
}

/// Copy of `gold` with the first-turn responses of `targets` mutated.
pub fn inject(
    gold: &Cassette,
    agent: &Agent,
    targets: &[&InstructionCase],
    fault: Fault,
    registry: &ToolRegistry,
) -> Result<Cassette, EvalError> {
    let mut out = gold.clone();
    for case in targets {
        let request = agent.request_after(&case.instruction, &[])?;
        let key = request.key();
        let entry = gold.get(&key).ok_or_else(|| EvalError::MissingCassette { system: agent.memory_kind(), case: case.id.clone() })?;
        let response = mutate_response(&entry.response, fault, case, registry).map_err(|message| EvalError::Episode {
            system: agent.memory_kind(),
            case: case.id.clone(),
            message,
        })?;
        out.insert(CassetteEntry { key, request_digest: entry.request_digest.clone(), response });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::tests::{case, registry};

    const GOLD: &str = "Thought: daily precipitation\nAction: get_daily_precipitation\nAction Input: {\"date\":\"2024-07-01\",\"station\":\"S1\"}";

    #[test]
    fn mutations() {
        let r = registry();
        let c = case();
        let m = mutate_response(GOLD, Fault::FictitiousTool, &c, &r).unwrap();
        assert!(m.contains("Action: get_daily_precipitation_magic\n"));
        let m = mutate_response(GOLD, Fault::WrongTool, &c, &r).unwrap();
        assert!(m.contains("Action: get_wind_speed\n"));
        let m = mutate_response(GOLD, Fault::CorruptInput, &c, &r).unwrap();
        assert!(m.ends_with("Action Input: {\"date\":\"2024-07-01_x\",\"station\":\"S1\"}"));
        assert!(m.starts_with("Thought: daily precipitation\n"));
        assert!(mutate_response("Final Answer: x", Fault::WrongTool, &c, &r).is_err());
    }
}
