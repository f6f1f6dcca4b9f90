//! Clients that execute virtual API calls, in-process or over HTTP.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{Map, Value};

use super::ToolError;
use crate::catalog::{ApiResponse, Catalog};
use crate::net;

pub trait ApiClient: Send + Sync {
    fn call(&self, api: &str, params: &Map<String, Value>) -> Result<ApiResponse, ToolError>;
}

/// Answers from the catalog directly, identical to the HTTP server's bodies.
pub struct LocalApiClient {
    catalog: Arc<Catalog>,
    seed: u64,
}

impl LocalApiClient {
    pub fn new(catalog: Arc<Catalog>, seed: u64) -> Self {
        Self { catalog, seed }
    }
}

impl ApiClient for LocalApiClient {
    fn call(&self, api: &str, params: &Map<String, Value>) -> Result<ApiResponse, ToolError> {
        Ok(ApiResponse::answer(&self.catalog, api, params, self.seed))
    }
}

/// Talks to a running catalog server. Build it outside any async runtime.
pub struct HttpApiClient {
    base_url: String,
    seed: u64,
    client: reqwest::blocking::Client,
}

impl HttpApiClient {
    pub fn new(base_url: impl Into<String>, seed: u64) -> Result<Self, ToolError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ToolError::Transport(e.to_string()))?;
        Ok(Self { base_url: base_url.into().trim_end_matches('/').to_string(), seed, client })
    }
}

impl ApiClient for HttpApiClient {
    fn call(&self, api: &str, params: &Map<String, Value>) -> Result<ApiResponse, ToolError> {
        let url = format!("{}/apis/{api}", self.base_url);
        net::check_url(&url).map_err(|e| ToolError::Transport(e.to_string()))?;
        let response = self
            .client
            .post(&url)
            .header("X-Seed", self.seed.to_string())
            .json(params)
            .send()
            .map_err(|e| ToolError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.bytes().map_err(|e| ToolError::Transport(e.to_string()))?;
        serde_json::from_slice(&body)
            .map_err(|e| ToolError::Transport(format!("unexpected {status} body from {url}: {e}")))
    }
}
