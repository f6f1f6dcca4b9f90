//! Deterministic response synthesis.
//!
//! The generator is ChaCha8 seeded with `sha256(name, canonical params, seed)`.
//! Values are derived from raw `next_u64` draws with fixed arithmetic, so
//! payloads do not depend on any library's distribution algorithms.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{validate_request, ApiResponse, ApiSpec, FieldSpec, ValueKind};
use crate::canonical::canonical_json;

const DEFAULT_RANGE: [f64; 2] = [0.0, 100.0];

#[derive(Debug, Error)]
#[error("synthesize_response called with invalid params for {api}: {}", violations.join("; "))]
pub struct SynthesisError {
    pub api: String,
    pub violations: Vec<String>,
}

/// Synthesizes the payload for a validated request. Calling it with params
/// that fail validation is a contract violation.
pub fn synthesize_response(spec: &ApiSpec, params: &Map<String, Value>, seed: u64) -> Result<ApiResponse, SynthesisError> {
    let validation = validate_request(spec, params);
    if !validation.is_ok() {
        return Err(SynthesisError { api: spec.name.clone(), violations: validation.messages() });
    }
    let mut rng = ChaCha8Rng::from_seed(seed_bytes(&spec.name, params, seed));
    let mut payload = BTreeMap::new();
    for field in &spec.output_fields {
        let value = generate_field(field, params, &mut rng);
        payload.insert(field.name.clone(), value);
    }
    Ok(ApiResponse::ok(&spec.name, payload))
}

fn seed_bytes(name: &str, params: &Map<String, Value>, seed: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"kg2data-synth-v1\0");
    hasher.update(name.as_bytes());
    hasher.update(b"\0");
    hasher.update(canonical_json(&Value::Object(params.clone())).as_bytes());
    hasher.update(b"\0");
    hasher.update(seed.to_string().as_bytes());
    hasher.finalize().into()
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    if n == 0 {
        0
    } else {
        rng.next_u64() % n
    }
}

fn generate_field(field: &FieldSpec, params: &Map<String, Value>, rng: &mut ChaCha8Rng) -> Value {
    if field.kind == ValueKind::Series {
        let element = field.element.unwrap_or(ValueKind::Number);
        let [lo, hi] = field.length.unwrap_or([1, 1]);
        let len = lo + below(rng, (hi - lo + 1) as u64) as usize;
        let items = (0..len).map(|_| scalar(element, field, params, rng)).collect();
        return Value::Array(items);
    }
    scalar(field.kind, field, params, rng)
}

fn scalar(kind: ValueKind, field: &FieldSpec, params: &Map<String, Value>, rng: &mut ChaCha8Rng) -> Value {
    let [min, max] = field.range.unwrap_or(DEFAULT_RANGE);
    match kind {
        ValueKind::Number => {
            let raw = min + (max - min) * unit(rng);
            let rounded = ((raw * 10.0).round() / 10.0).clamp(min, max);
            Value::Number(Number::from_f64(rounded).unwrap_or_else(|| Number::from(0)))
        }
        ValueKind::Integer => {
            let lo = min.ceil() as i64;
            let hi = max.floor() as i64;
            let span = (hi - lo + 1).max(1) as u64;
            Value::from(lo + below(rng, span) as i64)
        }
        ValueKind::Boolean => Value::Bool(rng.next_u64() & 1 == 1),
        ValueKind::Enum => {
            let allowed = field.allowed_values.as_deref().unwrap_or(&[]);
            let i = below(rng, allowed.len() as u64) as usize;
            allowed.get(i).map_or(Value::Null, |s| Value::String(s.clone()))
        }
        ValueKind::String => match params.get(&field.name) {
            Some(Value::String(s)) => Value::String(s.clone()),
            _ => Value::String(format!("{}-{:04}", field.name.replace('_', "-"), below(rng, 10_000))),
        },
        ValueKind::Date => {
            let echoed = params.get(&field.name).or_else(|| params.get("date")).and_then(Value::as_str);
            match echoed {
                Some(s) => Value::String(s.to_string()),
                None => {
                    let base = chrono::NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date");
                    let day = base + chrono::Days::new(below(rng, 366));
                    Value::String(day.format("%Y-%m-%d").to_string())
                }
            }
        }
        ValueKind::Series => Value::Null,
    }
}
