//! Request validation against a spec's parameter schema.
//!
//! Every violation is collected; nothing fails fast.

use std::fmt;

use chrono::NaiveDate;
use serde::{Serialize, Serializer};
use serde_json::{Map, Value};

use super::{ApiSpec, ParamSpec, ValueKind};
use crate::canonical::format_f64;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Missing { param: String },
    Unknown { param: String },
    WrongKind { param: String, expected: ValueKind },
    InvalidDate { param: String, value: String },
    BelowMin { param: String, value: f64, min: f64 },
    AboveMax { param: String, value: f64, max: f64 },
    NotAllowed { param: String, value: String, allowed: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing { param } => write!(f, "missing required param {param}"),
            Violation::Unknown { param } => write!(f, "unknown param {param}"),
            Violation::WrongKind { param, expected } => write!(f, "param {param}: expected {expected}"),
            Violation::InvalidDate { param, value } => {
                write!(f, "param {param}: invalid date {value:?} (expected YYYY-MM-DD)")
            }
            Violation::BelowMin { param, value, min } => {
                write!(f, "param {param}: value {} below minimum {}", format_f64(*value), format_f64(*min))
            }
            Violation::AboveMax { param, value, max } => {
                write!(f, "param {param}: value {} above maximum {}", format_f64(*value), format_f64(*max))
            }
            Violation::NotAllowed { param, value, allowed } => {
                write!(f, "param {param}: value {value:?} not in allowed values [{}]", allowed.join(", "))
            }
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationResult {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

pub fn validate_request(spec: &ApiSpec, params: &Map<String, Value>) -> ValidationResult {
    validate_params(&spec.params, params)
}

/// Validates `params` against a parameter schema. Spec params are checked in
/// declaration order, then unknown keys in sorted order.
pub fn validate_params(schema: &[ParamSpec], params: &Map<String, Value>) -> ValidationResult {
    let mut violations = Vec::new();
    for p in schema {
        match params.get(&p.name) {
            None | Some(Value::Null) => {
                if p.required {
                    violations.push(Violation::Missing { param: p.name.clone() });
                }
            }
            Some(value) => check_value(p, value, &mut violations),
        }
    }
    let mut unknown: Vec<&String> = params.keys().filter(|k| !schema.iter().any(|p| &p.name == *k)).collect();
    unknown.sort();
    violations.extend(unknown.into_iter().map(|k| Violation::Unknown { param: k.clone() }));
    ValidationResult { ok: violations.is_empty(), violations }
}

/// Parses a strict `YYYY-MM-DD` calendar date.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    let shape = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !shape {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn check_value(p: &ParamSpec, value: &Value, out: &mut Vec<Violation>) {
    let wrong = || Violation::WrongKind { param: p.name.clone(), expected: p.kind };
    match p.kind {
        ValueKind::String => {
            if !value.is_string() {
                out.push(wrong());
            }
        }
        ValueKind::Boolean => {
            if !value.is_boolean() {
                out.push(wrong());
            }
        }
        ValueKind::Integer | ValueKind::Number => {
            let Some(x) = value.as_f64() else {
                out.push(wrong());
                return;
            };
            if p.kind == ValueKind::Integer && x.fract() != 0.0 {
                out.push(wrong());
                return;
            }
            if let Some([min, max]) = p.range {
                if x < min {
                    out.push(Violation::BelowMin { param: p.name.clone(), value: x, min });
                }
                if x > max {
                    out.push(Violation::AboveMax { param: p.name.clone(), value: x, max });
                }
            }
        }
        ValueKind::Date => match value.as_str() {
            Some(s) if parse_date(s).is_some() => {}
            Some(s) => out.push(Violation::InvalidDate { param: p.name.clone(), value: s.to_string() }),
            None => out.push(wrong()),
        },
        ValueKind::Enum => {
            let allowed = p.allowed_values.clone().unwrap_or_default();
            match value.as_str() {
                Some(s) if allowed.iter().any(|a| a == s) => {}
                Some(s) => out.push(Violation::NotAllowed { param: p.name.clone(), value: s.to_string(), allowed }),
                None => out.push(wrong()),
            }
        }
        ValueKind::Series => out.push(wrong()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Category, FieldSpec};
    use serde_json::json;

    fn spec() -> ApiSpec {
        let param = |name: &str, kind, required| ParamSpec {
            name: name.into(),
            kind,
            units: None,
            required,
            allowed_values: None,
            range: None,
        };
        let mut hours = param("hours", ValueKind::Integer, false);
        hours.range = Some([1.0, 72.0]);
        let mut level = param("level", ValueKind::Enum, false);
        level.allowed_values = Some(vec!["850".into(), "500".into()]);
        ApiSpec {
            name: "get_x".into(),
            description: String::new(),
            category: Category::Other,
            params: vec![
                param("station", ValueKind::String, true),
                param("date", ValueKind::Date, true),
                hours,
                level,
            ],
            output_fields: vec![FieldSpec {
                name: "v".into(),
                kind: ValueKind::Number,
                units: None,
                range: None,
                element: None,
                length: None,
                allowed_values: None,
            }],
        }
    }

    fn params(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn valid_request_passes() {
        let r = validate_request(&spec(), &params(json!({"station": "S1", "date": "2024-07-01", "hours": 24})));
        assert!(r.is_ok() && r.ok);
    }

    #[test]
    fn missing_required_param() {
        let r = validate_request(&spec(), &params(json!({"date": "2024-07-01"})));
        assert_eq!(r.messages(), vec!["missing required param station"]);
    }

    #[test]
    fn invalid_date_reported() {
        let r = validate_request(&spec(), &params(json!({"station": "S1", "date": "2024-13-40"})));
        assert_eq!(r.violations.len(), 1);
        assert!(r.messages()[0].contains("invalid date"));
        assert!(parse_date("2024-7-01").is_none());
        assert!(parse_date("2024-02-29").is_some());
        assert!(parse_date("2023-02-29").is_none());
    }

    #[test]
    fn range_violation_names_the_bound() {
        let r = validate_request(&spec(), &params(json!({"station": "S1", "date": "2024-07-01", "hours": 0})));
        assert_eq!(r.messages(), vec!["param hours: value 0 below minimum 1"]);
        let r = validate_request(&spec(), &params(json!({"station": "S1", "date": "2024-07-01", "hours": 2.5})));
        assert_eq!(r.messages(), vec!["param hours: expected integer"]);
    }

    #[test]
    fn violations_accumulate() {
        let one = validate_request(&spec(), &params(json!({"date": "2024-07-01"})));
        let two = validate_request(&spec(), &params(json!({"date": "2024-07-01", "level": "700"})));
        let three = validate_request(&spec(), &params(json!({"date": "2024-07-01", "level": "700", "zz": 1})));
        assert_eq!(one.violations.len(), 1);
        assert_eq!(two.violations.len(), 2);
        assert_eq!(three.violations.len(), 3);
        assert_eq!(&two.violations[..1], &one.violations[..]);
        assert_eq!(three.messages()[2], "unknown param zz");
    }
}
