//! Virtual meteorological API catalog.
//!
//! A catalog is a JSON document `{ "apis": [ApiSpec, ...] }`. Each spec
//! declares its input parameters and output fields; requests are validated
//! against the parameter schema and responses are synthesized
//! deterministically from the output schema (see [`synth`]). [`server`]
//! exposes the catalog over HTTP as the mock data provider.

pub mod server;
pub mod synth;
mod validate;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use synth::{synthesize_response, SynthesisError};
pub use validate::{validate_params, validate_request, ValidationResult, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Temperature,
    Humidity,
    Precipitation,
    WindSpeed,
    WindDirection,
    Pressure,
    Radiation,
    Other,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Temperature => "temperature",
            Category::Humidity => "humidity",
            Category::Precipitation => "precipitation",
            Category::WindSpeed => "wind_speed",
            Category::WindDirection => "wind_direction",
            Category::Pressure => "pressure",
            Category::Radiation => "radiation",
            Category::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    String,
    Integer,
    Number,
    Boolean,
    Date,
    Enum,
    /// Output fields only: a sequence of `element` values.
    Series,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Integer | ValueKind::Number)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::String => "string",
            ValueKind::Integer => "integer",
            ValueKind::Number => "number",
            ValueKind::Boolean => "boolean",
            ValueKind::Date => "date",
            ValueKind::Enum => "enum",
            ValueKind::Series => "series",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Element kind of a series field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<ValueKind>,
    /// Inclusive `[min, max]` length of a series field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub name: String,
    pub description: String,
    pub category: Category,
    pub params: Vec<ParamSpec>,
    pub output_fields: Vec<FieldSpec>,
}

impl ApiSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.output_fields.iter().find(|f| f.name == name)
    }

    /// Checks the structural invariants of the spec.
    pub fn check(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("name {:?} is not a snake_case identifier", self.name));
        }
        if self.params.is_empty() {
            return Err("at least one param is required".into());
        }
        if self.output_fields.is_empty() {
            return Err("at least one output field is required".into());
        }
        let mut names = HashSet::new();
        for p in &self.params {
            if !names.insert(p.name.as_str()) {
                return Err(format!("duplicate param {}", p.name));
            }
            check_param(p)?;
        }
        let mut names = HashSet::new();
        for f in &self.output_fields {
            if !names.insert(f.name.as_str()) {
                return Err(format!("duplicate output field {}", f.name));
            }
            check_field(f)?;
        }
        Ok(())
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn check_range(owner: &str, range: Option<[f64; 2]>) -> Result<(), String> {
    if let Some([lo, hi]) = range {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(format!("{owner}: invalid range [{lo}, {hi}]"));
        }
    }
    Ok(())
}

fn check_param(p: &ParamSpec) -> Result<(), String> {
    if !is_identifier(&p.name) {
        return Err(format!("param name {:?} is not an identifier", p.name));
    }
    if p.kind == ValueKind::Series {
        return Err(format!("param {}: series is an output-only kind", p.name));
    }
    match (&p.allowed_values, p.kind) {
        (Some(v), ValueKind::Enum) if v.is_empty() => {
            return Err(format!("param {}: allowed_values must not be empty", p.name))
        }
        (None, ValueKind::Enum) => return Err(format!("param {}: enum requires allowed_values", p.name)),
        (Some(_), kind) if kind != ValueKind::Enum => {
            return Err(format!("param {}: allowed_values only valid for enum", p.name))
        }
        _ => {}
    }
    if p.range.is_some() && !p.kind.is_numeric() {
        return Err(format!("param {}: range only valid on numeric kinds", p.name));
    }
    check_range(&format!("param {}", p.name), p.range)
}

fn check_field(f: &FieldSpec) -> Result<(), String> {
    let value_kind = if f.kind == ValueKind::Series {
        let element = f.element.ok_or_else(|| format!("field {}: series requires an element kind", f.name))?;
        if element == ValueKind::Series {
            return Err(format!("field {}: nested series", f.name));
        }
        match f.length {
            Some([lo, hi]) if lo <= hi => {}
            Some(_) => return Err(format!("field {}: invalid length bound", f.name)),
            None => return Err(format!("field {}: series requires a length bound", f.name)),
        }
        element
    } else {
        if f.element.is_some() || f.length.is_some() {
            return Err(format!("field {}: element/length only valid on series", f.name));
        }
        f.kind
    };
    if value_kind == ValueKind::Enum && f.allowed_values.as_ref().is_none_or(|v| v.is_empty()) {
        return Err(format!("field {}: enum requires allowed_values", f.name));
    }
    if f.range.is_some() && !value_kind.is_numeric() {
        return Err(format!("field {}: range only valid on numeric kinds", f.name));
    }
    check_range(&format!("field {}", f.name), f.range)
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("catalog parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("catalog must contain ≥1 API")]
    Empty,
    #[error("duplicate api name {0}")]
    DuplicateApi(String),
    #[error("invalid api spec {api}: {reason}")]
    InvalidSpec { api: String, reason: String },
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    apis: Vec<ApiSpec>,
}

/// An immutable, validated set of API specs.
#[derive(Debug, Clone)]
pub struct Catalog {
    apis: Vec<ApiSpec>,
    index: HashMap<String, usize>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.apis == other.apis
    }
}

impl Catalog {
    pub fn new(apis: Vec<ApiSpec>) -> Result<Self, CatalogError> {
        if apis.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut index = HashMap::with_capacity(apis.len());
        for (i, spec) in apis.iter().enumerate() {
            spec.check().map_err(|reason| CatalogError::InvalidSpec { api: spec.name.clone(), reason })?;
            if index.insert(spec.name.clone(), i).is_some() {
                return Err(CatalogError::DuplicateApi(spec.name.clone()));
            }
        }
        Ok(Self { apis, index })
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::new(file.apis)
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile { apis: self.apis.clone() };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    pub fn get(&self, name: &str) -> Option<&ApiSpec> {
        self.index.get(name).map(|&i| &self.apis[i])
    }

    pub fn apis(&self) -> &[ApiSpec] {
        &self.apis
    }

    pub fn len(&self) -> usize {
        self.apis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apis.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ApiSpec> {
        self.apis.iter()
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
    let catalog = Catalog::from_json(&text)?;
    log::info!("loaded {} apis from {}", catalog.len(), path.display());
    Ok(catalog)
}

pub fn write_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut text = catalog.to_json();
    text.push('\n');
    std::fs::write(path, text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    InvalidParams,
    NotFound,
}

/// Result of one virtual API call. `status = ok` carries a payload whose keys
/// are exactly the spec's output fields; any other status carries errors and
/// an empty payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub api_name: String,
    pub status: ResponseStatus,
    pub payload: BTreeMap<String, Value>,
    pub errors: Vec<String>,
}

impl ApiResponse {
    pub fn ok(api_name: &str, payload: BTreeMap<String, Value>) -> Self {
        Self { api_name: api_name.to_string(), status: ResponseStatus::Ok, payload, errors: Vec::new() }
    }

    pub fn invalid(api_name: &str, errors: Vec<String>) -> Self {
        debug_assert!(!errors.is_empty());
        Self { api_name: api_name.to_string(), status: ResponseStatus::InvalidParams, payload: BTreeMap::new(), errors }
    }

    pub fn not_found(api_name: &str) -> Self {
        Self {
            api_name: api_name.to_string(),
            status: ResponseStatus::NotFound,
            payload: BTreeMap::new(),
            errors: vec![format!("unknown api {api_name}")],
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ResponseStatus::Ok
    }

    /// Answers a request entirely in-process: unknown name, invalid params and
    /// successful synthesis map to the same responses the HTTP server sends.
    pub fn answer(catalog: &Catalog, api_name: &str, params: &serde_json::Map<String, Value>, seed: u64) -> Self {
        let Some(spec) = catalog.get(api_name) else {
            return Self::not_found(api_name);
        };
        let validation = validate_request(spec, params);
        if !validation.is_ok() {
            return Self::invalid(api_name, validation.messages());
        }
        synthesize_response(spec, params, seed).expect("validated params synthesize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str) -> ApiSpec {
        ApiSpec {
            name: name.into(),
            description: "test".into(),
            category: Category::Temperature,
            params: vec![ParamSpec {
                name: "station".into(),
                kind: ValueKind::String,
                units: None,
                required: true,
                allowed_values: None,
                range: None,
            }],
            output_fields: vec![FieldSpec {
                name: "temperature".into(),
                kind: ValueKind::Number,
                units: Some("°C".into()),
                range: Some([-50.0, 50.0]),
                element: None,
                length: None,
                allowed_values: None,
            }],
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = Catalog::new(vec![spec("get_temperature"), spec("get_temperature")]).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateApi(n) if n == "get_temperature"));
    }

    #[test]
    fn empty_catalog_rejected() {
        let err = Catalog::from_json(r#"{"apis": []}"#).unwrap_err();
        assert_eq!(err.to_string(), "catalog must contain ≥1 API");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Catalog::from_json("{\n  \"apis\": [\n    {\"name\": }\n  ]\n}").unwrap_err();
        match err {
            CatalogError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn param_invariants_enforced() {
        let mut s = spec("get_x");
        s.params[0].allowed_values = Some(vec!["a".into()]);
        assert!(Catalog::new(vec![s]).is_err());

        let mut s = spec("get_x");
        s.params[0].range = Some([0.0, 1.0]);
        assert!(Catalog::new(vec![s]).is_err(), "range on a string param");

        let mut s = spec("get_x");
        s.params[0].kind = ValueKind::Integer;
        s.params[0].range = Some([5.0, 1.0]);
        assert!(Catalog::new(vec![s]).is_err(), "min > max");

        let mut s = spec("get_x");
        s.params[0].kind = ValueKind::Enum;
        assert!(Catalog::new(vec![s]).is_err(), "enum without values");

        let mut s = spec("get_x");
        s.params.clear();
        assert!(Catalog::new(vec![s]).is_err());

        let mut s = spec("get_x");
        s.output_fields[0].kind = ValueKind::Series;
        assert!(Catalog::new(vec![s]).is_err(), "series without element/length");
    }

    #[test]
    fn round_trip_through_disk() {
        let catalog = Catalog::new(vec![spec("get_a"), spec("get_b")]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        write_catalog(&catalog, &path).unwrap();
        assert_eq!(load_catalog(&path).unwrap(), catalog);
    }
}
