//! Self-instruct generation of instruction cases.
//!
//! For each API the model writes one question per requested case,
//! alternating explicit and implicit style, plus the parameters the
//! question implies. Questions naming the API are regenerated up to three
//! times before the API is reported as exhausted.

use serde_json::{Map, Value};

use super::{mentions_name, EvalError, InstructionCase, Style};
use crate::agent::parse_params;
use crate::catalog::{validate_params, ApiSpec, Catalog, Category, ValueKind};
use crate::gateway::{ChatMessage, CompletionRequest, Gateway};

pub const MAX_ATTEMPTS: usize = 3;

pub const PAIR_SYSTEM_PROMPT: &str = "You write evaluation questions for a meteorological data service.
Given one API, write a single question that the API answers, in the requested style:
explicit: a clear, direct question naming the quantity, station and dates.
implicit: a specialized question framed in domain language, without naming the quantity directly.
Never mention the API name or its parameter names.
Answer with exactly two lines:
Instruction: the question
Parameters: a JSON object with the API parameters the question implies";

pub fn pair_request(api: &ApiSpec, style: Style, attempt: usize) -> CompletionRequest {
    let params = api
        .params
        .iter()
        .map(|p| format!("- {} ({}{})", p.name, p.kind, if p.required { ", required" } else { "" }))
        .collect::<Vec<_>>()
        .join("\n");
    CompletionRequest::new(vec![
        ChatMessage::system(PAIR_SYSTEM_PROMPT),
        ChatMessage::user(format!(
            "API: {}\nDescription: {}\nParameters:\n{}\nStyle: {}\nAttempt: {}",
            api.name,
            api.description,
            params,
            style.as_str(),
            attempt
        )),
    ])
    .with_max_tokens(256)
}

/// `Instruction:` and `Parameters:` lines of one generated pair.
pub fn parse_pair(raw: &str) -> Result<(String, Map<String, Value>), String> {
    let mut instruction = None;
    let mut params = None;
    for line in raw.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("Instruction:") {
            instruction = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("Parameters:") {
            params = Some(parse_params(rest).ok_or("Parameters line is not a JSON object")?);
        }
    }
    let instruction = instruction.filter(|i| !i.is_empty()).ok_or("missing Instruction line")?;
    Ok((instruction, params.ok_or("missing Parameters line")?))
}

fn intent_tags(api: &ApiSpec) -> Vec<String> {
    match api.category {
        Category::Other => api.name.trim_start_matches("get_").split('_').take(1).map(String::from).collect(),
        c => vec![c.as_str().replace('_', " ")],
    }
}

fn answer_fields(api: &ApiSpec) -> Vec<String> {
    let fields: Vec<String> = api
        .output_fields
        .iter()
        .filter_map(|f| match f.kind {
            k if k.is_numeric() => Some(f.name.clone()),
            ValueKind::Series if f.element.is_some_and(ValueKind::is_numeric) => Some(format!("{}.mean", f.name)),
            _ => None,
        })
        .collect();
    if fields.is_empty() {
        api.output_fields.iter().filter(|f| api.param(&f.name).is_none()).take(1).map(|f| f.name.clone()).collect()
    } else {
        fields
    }
}

pub fn case_id(api: &str, k: usize) -> String {
    let style = if k.is_multiple_of(2) { 'e' } else { 'i' };
    match k / 2 {
        0 => format!("{api}-{style}"),
        round => format!("{api}-{style}{}", round + 1),
    }
}

/// `per_api` cases per API in catalog order, alternating explicit and implicit.
pub fn generate_pairs(catalog: &Catalog, gateway: &Gateway, per_api: usize) -> Result<Vec<InstructionCase>, EvalError> {
    let mut cases = Vec::new();
    for api in catalog.iter() {
        for k in 0..per_api {
            let style = if k % 2 == 0 { Style::Explicit } else { Style::Implicit };
            let mut reason = String::new();
            let mut accepted = None;
            for attempt in 1..=MAX_ATTEMPTS {
                let raw = gateway.complete(&pair_request(api, style, attempt))?;
                match parse_pair(&raw) {
                    Err(e) => reason = e,
                    Ok((instruction, _)) if mentions_name(&instruction, &api.name) => {
                        log::warn!("{} attempt {attempt}: instruction names the api, regenerating", api.name);
                        reason = "every instruction named the api".into();
                    }
                    Ok((_, params)) if !validate_params(&api.params, &params).is_ok() => {
                        reason = format!("invalid parameters: {}", validate_params(&api.params, &params).messages().join("; "));
                    }
                    Ok(pair) => {
                        accepted = Some(pair);
                        break;
                    }
                }
            }
            let (instruction, gold_params) =
                accepted.ok_or_else(|| EvalError::GenerationExhausted { api: api.name.clone(), reason })?;
            cases.push(InstructionCase {
                id: case_id(&api.name, k),
                instruction,
                style,
                gold_tool: api.name.clone(),
                gold_params,
                intent_tags: intent_tags(api).into_iter().collect(),
                answer_fields: answer_fields(api),
            });
        }
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatBackend, GatewayError};
    use std::sync::{Arc, Mutex};

    struct Replies(Mutex<Vec<&'static str>>);

    impl ChatBackend for Replies {
        fn complete(&self, _: &CompletionRequest) -> Result<String, GatewayError> {
            Ok(self.0.lock().unwrap().remove(0).to_string())
        }
    }

    fn catalog() -> Catalog {
        let reg = crate::eval::tests::registry();
        Catalog::new(vec![reg.catalog().get("get_daily_precipitation").unwrap().clone()]).unwrap()
    }

    fn gateway(replies: Vec<&'static str>) -> Gateway {
        Gateway::live(Arc::new(Replies(Mutex::new(replies))))
    }

    const GOOD: &str = "Instruction: How much rain fell at S1 on 2024-07-01?\nParameters: {\"station\": \"S1\", \"date\": \"2024-07-01\"}";
    const LEAK: &str = "Instruction: Call get_daily_precipitation for S1\nParameters: {\"station\": \"S1\", \"date\": \"2024-07-01\"}";

    #[test]
    fn leaked_names_are_regenerated() {
        let cases = generate_pairs(&catalog(), &gateway(vec![LEAK, GOOD, GOOD]), 2).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].id, "get_daily_precipitation-e");
        assert_eq!(cases[1].style, Style::Implicit);
        assert_eq!(cases[0].answer_fields, vec!["total"]);
        assert!(cases[0].intent_tags.contains("precipitation"));
    }

    #[test]
    fn exhaustion_names_the_api() {
        let err = generate_pairs(&catalog(), &gateway(vec![LEAK, LEAK, LEAK]), 1).unwrap_err();
        assert!(matches!(err, EvalError::GenerationExhausted { ref api, .. } if api == "get_daily_precipitation"));
    }

    #[test]
    fn ids_alternate() {
        assert_eq!(case_id("a", 0), "a-e");
        assert_eq!(case_id("a", 1), "a-i");
        assert_eq!(case_id("a", 2), "a-e2");
        assert_eq!(case_id("a", 3), "a-i2");
    }
}
