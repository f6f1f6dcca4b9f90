//! Agent-visible tools bound one-to-one to virtual APIs.
//!
//! Invocation runs the data-tool pipeline: validate the extracted
//! parameters, call the API, extract scalar fields, compute statistics over
//! series fields and render the Observation line the agent reads.

pub mod client;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use client::{ApiClient, HttpApiClient, LocalApiClient};

use crate::canonical::{canonical_json, format_f64};
use crate::catalog::{validate_params, ApiResponse, Catalog, ParamSpec, ValidationResult, ValueKind};
use crate::text::token_count;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("duplicate tool name {0}")]
    Duplicate(String),
    #[error("tool {tool} is bound to unknown api {api}")]
    UnknownApi { tool: String, api: String },
    #[error("tool {0} params do not mirror its api's params")]
    SchemaMismatch(String),
    #[error("tool descriptions need {needed} tokens but the budget is {budget}")]
    Sizing { needed: usize, budget: usize },
    #[error("empty series")]
    EmptySeries,
    #[error("tool transport error: {0}")]
    Transport(String),
    #[error("tool registry file error: {0}")]
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub bound_api: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn series_stats(values: &[f64]) -> Result<SeriesStats, ToolError> {
    if values.is_empty() {
        return Err(ToolError::EmptySeries);
    }
    let sum: f64 = values.iter().sum();
    Ok(SeriesStats {
        mean: sum / values.len() as f64,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count: values.len(),
    })
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolResult {
    pub raw: ApiResponse,
    pub extracted: BTreeMap<String, Value>,
    pub stats: Option<BTreeMap<String, SeriesStats>>,
    pub rendered: String,
}

impl ToolResult {
    /// Extracts scalar fields and summarizes numeric series. The rendered
    /// Observation is a pure function of `raw`.
    pub fn from_response(raw: ApiResponse) -> Self {
        let mut extracted = BTreeMap::new();
        let mut stats = BTreeMap::new();
        for (name, value) in &raw.payload {
            match value {
                Value::Array(items) => {
                    let numbers: Vec<f64> = items.iter().filter_map(Value::as_f64).collect();
                    if numbers.len() == items.len() {
                        if let Ok(s) = series_stats(&numbers) {
                            stats.insert(name.clone(), s);
                        }
                    }
                }
                other => {
                    extracted.insert(name.clone(), other.clone());
                }
            }
        }
        let stats = (!stats.is_empty()).then_some(stats);
        let rendered = render_observation(&extracted, stats.as_ref());
        Self { raw, extracted, stats, rendered }
    }
}

fn number(x: f64) -> Value {
    serde_json::from_str(&format_f64(x)).unwrap_or(Value::Null)
}

fn render_observation(extracted: &BTreeMap<String, Value>, stats: Option<&BTreeMap<String, SeriesStats>>) -> String {
    let mut obj: Map<String, Value> = extracted.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    if let Some(stats) = stats {
        let mut s = Map::new();
        for (name, st) in stats {
            let mut m = Map::new();
            m.insert("count".into(), Value::from(st.count));
            m.insert("max".into(), number(round2(st.max)));
            m.insert("mean".into(), number(round2(st.mean)));
            m.insert("min".into(), number(round2(st.min)));
            s.insert(name.clone(), Value::Object(m));
        }
        obj.insert("stats".into(), Value::Object(s));
    }
    canonical_json(&Value::Object(obj))
}

/// Result of invoking a tool by name. Failures the agent can react to are
/// outcomes, not errors; each renders to an Observation line.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolOutcome {
    Success(ToolResult),
    UnknownTool { name: String },
    InvalidParams { tool: String, validation: ValidationResult },
    ApiFailure { tool: String, response: ApiResponse },
    Transport { tool: String, message: String },
}

impl ToolOutcome {
    pub fn observation(&self) -> String {
        match self {
            ToolOutcome::Success(r) => r.rendered.clone(),
            ToolOutcome::UnknownTool { name } => {
                format!("Error: unknown tool {name}. Use one of the tools listed above.")
            }
            ToolOutcome::InvalidParams { tool, validation } => {
                format!("Error: invalid parameters for {tool}: {}", validation.messages().join("; "))
            }
            ToolOutcome::ApiFailure { tool, response } => {
                format!("Error: {tool} failed: {}", response.errors.join("; "))
            }
            ToolOutcome::Transport { tool, message } => format!("Error: {tool} is unreachable: {message}"),
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, ToolOutcome::Success(_))
    }
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    tools: Vec<ToolSpec>,
}

/// Tools in registration order, bound to a catalog.
pub struct ToolRegistry {
    catalog: Arc<Catalog>,
    tools: Vec<ToolSpec>,
    index: HashMap<String, usize>,
}

impl ToolRegistry {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Self { catalog, tools: Vec::new(), index: HashMap::new() }
    }

    /// One tool per API, named after it, in catalog order.
    pub fn from_catalog(catalog: Arc<Catalog>) -> Result<Self, ToolError> {
        let mut registry = Self::new(catalog.clone());
        for api in catalog.iter() {
            registry.register(ToolSpec {
                name: api.name.clone(),
                description: api.description.clone(),
                params: api.params.clone(),
                bound_api: api.name.clone(),
            })?;
        }
        Ok(registry)
    }

    pub fn load(catalog: Arc<Catalog>, path: impl AsRef<Path>) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ToolError::File(e.to_string()))?;
        let file: RegistryFile = serde_json::from_str(&text).map_err(|e| ToolError::File(e.to_string()))?;
        let mut registry = Self::new(catalog);
        for spec in file.tools {
            registry.register(spec)?;
        }
        Ok(registry)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RegistryFile { tools: self.tools.clone() }).expect("registry serializes")
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), ToolError> {
        if self.index.contains_key(&spec.name) {
            return Err(ToolError::Duplicate(spec.name));
        }
        let api = self
            .catalog
            .get(&spec.bound_api)
            .ok_or_else(|| ToolError::UnknownApi { tool: spec.name.clone(), api: spec.bound_api.clone() })?;
        if api.params != spec.params {
            return Err(ToolError::SchemaMismatch(spec.name));
        }
        self.index.insert(spec.name.clone(), self.tools.len());
        self.tools.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.index.get(name).map(|&i| &self.tools[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// One `Tool:` block per tool. Never truncates: exceeding the token
    /// budget is an error.
    pub fn describe(&self, budget: usize) -> Result<String, ToolError> {
        let text = self.tools.iter().map(describe_tool).collect::<Vec<_>>().join("\n\n");
        let needed = token_count(&text);
        if needed > budget {
            return Err(ToolError::Sizing { needed, budget });
        }
        Ok(text)
    }

    pub fn validate(&self, name: &str, params: &Map<String, Value>) -> Option<ValidationResult> {
        self.get(name).map(|t| validate_params(&t.params, params))
    }

    pub fn invoke(&self, name: &str, params: &Map<String, Value>, client: &dyn ApiClient) -> ToolOutcome {
        let Some(tool) = self.get(name) else {
            return ToolOutcome::UnknownTool { name: name.to_string() };
        };
        let validation = validate_params(&tool.params, params);
        if !validation.is_ok() {
            return ToolOutcome::InvalidParams { tool: tool.name.clone(), validation };
        }
        match client.call(&tool.bound_api, params) {
            Err(e) => ToolOutcome::Transport { tool: tool.name.clone(), message: e.to_string() },
            Ok(response) if response.is_ok() => ToolOutcome::Success(ToolResult::from_response(response)),
            Ok(response) => ToolOutcome::ApiFailure { tool: tool.name.clone(), response },
        }
    }
}

fn describe_param(p: &ParamSpec) -> String {
    let mut parts = vec![p.kind.to_string(), if p.required { "required".into() } else { "optional".into() }];
    if p.kind == ValueKind::Date {
        parts.push("format YYYY-MM-DD".into());
    }
    if let Some(u) = &p.units {
        parts.push(format!("units {u}"));
    }
    if let Some([lo, hi]) = p.range {
        parts.push(format!("range {} to {}", format_f64(lo), format_f64(hi)));
    }
    if let Some(values) = &p.allowed_values {
        parts.push(format!("one of {}", values.join("|")));
    }
    format!("  - {} ({})", p.name, parts.join(", "))
}

fn describe_tool(t: &ToolSpec) -> String {
    let mut lines = vec![format!("Tool: {}", t.name), format!("Description: {}", t.description), "Parameters:".to_string()];
    lines.extend(t.params.iter().map(describe_param));
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ApiSpec, Category, FieldSpec};
    use serde_json::json;
    use std::sync::atomic::{AtomicUsize, Ordering};

    pub(crate) fn catalog() -> Arc<Catalog> {
        let param = |name: &str, kind| ParamSpec { name: name.into(), kind, units: None, required: true, allowed_values: None, range: None };
        let field = |name: &str, kind| FieldSpec { name: name.into(), kind, units: None, range: None, element: None, length: None, allowed_values: None };
        let mut series = field("hourly", ValueKind::Series);
        series.element = Some(ValueKind::Number);
        series.length = Some([24, 24]);
        let api = |name: &str, fields: Vec<FieldSpec>| ApiSpec {
            name: name.into(),
            description: format!("{name} description"),
            category: Category::Precipitation,
            params: vec![param("station", ValueKind::String), param("date", ValueKind::Date)],
            output_fields: fields,
        };
        Arc::new(
            Catalog::new(vec![
                api("get_daily_precipitation", vec![field("station", ValueKind::String), field("total", ValueKind::Number)]),
                api("get_hourly_precipitation", vec![field("station", ValueKind::String), series]),
                api("get_wind_speed", vec![field("speed", ValueKind::Number)]),
            ])
            .unwrap(),
        )
    }

    struct Counting(AtomicUsize, LocalApiClient);

    impl ApiClient for Counting {
        fn call(&self, api: &str, params: &Map<String, Value>) -> Result<ApiResponse, ToolError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            self.1.call(api, params)
        }
    }

    fn params() -> Map<String, Value> {
        json!({"station": "S1", "date": "2024-07-01"}).as_object().unwrap().clone()
    }

    #[test]
    fn registry_mirrors_catalog() {
        let r = ToolRegistry::from_catalog(catalog()).unwrap();
        assert_eq!(r.len(), 3);
        let mut dup = ToolRegistry::from_catalog(catalog()).unwrap();
        let spec = r.get("get_wind_speed").unwrap().clone();
        assert!(matches!(dup.register(spec.clone()), Err(ToolError::Duplicate(_))));
        let mut bad = ToolRegistry::new(catalog());
        assert!(matches!(
            bad.register(ToolSpec { bound_api: "nope".into(), ..spec.clone() }),
            Err(ToolError::UnknownApi { .. })
        ));
        assert!(matches!(bad.register(ToolSpec { params: vec![], ..spec }), Err(ToolError::SchemaMismatch(_))));
    }

    #[test]
    fn describe_renders_blocks_without_truncation() {
        let r = ToolRegistry::from_catalog(catalog()).unwrap();
        let text = r.describe(10_000).unwrap();
        assert_eq!(text.matches("Tool: ").count(), 3);
        assert!(text.contains("  - date (date, required, format YYYY-MM-DD)"));
        let needed = token_count(&text);
        assert!(matches!(r.describe(needed - 1), Err(ToolError::Sizing { .. })));
        assert_eq!(ToolRegistry::new(catalog()).describe(0).unwrap(), "");
    }

    #[test]
    fn unknown_tool_never_reaches_client() {
        let r = ToolRegistry::from_catalog(catalog()).unwrap();
        let client = Counting(AtomicUsize::new(0), LocalApiClient::new(catalog(), 0));
        let out = r.invoke("get_rainfall_magic", &params(), &client);
        assert_eq!(out, ToolOutcome::UnknownTool { name: "get_rainfall_magic".into() });
        assert!(out.observation().contains("unknown tool get_rainfall_magic"));
        assert_eq!(client.0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn missing_param_is_an_observation() {
        let r = ToolRegistry::from_catalog(catalog()).unwrap();
        let client = LocalApiClient::new(catalog(), 0);
        let mut p = params();
        p.remove("station");
        let out = r.invoke("get_daily_precipitation", &p, &client);
        assert_eq!(out.observation(), "Error: invalid parameters for get_daily_precipitation: missing required param station");
    }

    #[test]
    fn success_extracts_fields_and_stats() {
        let r = ToolRegistry::from_catalog(catalog()).unwrap();
        let client = LocalApiClient::new(catalog(), 0);
        let ToolOutcome::Success(res) = r.invoke("get_hourly_precipitation", &params(), &client) else { panic!() };
        assert_eq!(res.extracted["station"], json!("S1"));
        let st = res.stats.as_ref().unwrap()["hourly"];
        assert_eq!(st.count, 24);
        let obs: Value = serde_json::from_str(&res.rendered).unwrap();
        assert_eq!(obs["stats"]["hourly"]["count"], json!(24));
        assert_eq!(ToolResult::from_response(res.raw.clone()).rendered, res.rendered);

        let ToolOutcome::Success(daily) = r.invoke("get_daily_precipitation", &params(), &client) else { panic!() };
        assert!(daily.stats.is_none());
        assert!(!daily.rendered.contains('\n'));
    }

    #[test]
    fn stats_arithmetic() {
        let s = series_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.count), (2.0, 1.0, 3.0, 3));
        let s = series_stats(&[5.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.count), (5.0, 5.0, 5.0, 1));
        assert!(matches!(series_stats(&[]), Err(ToolError::EmptySeries)));
    }
}
