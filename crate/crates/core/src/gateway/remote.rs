//! Chat-completion client for live mode.
//!
//! Speaks the common `POST {endpoint}` chat-completions JSON shape:
//! `{model, messages, temperature, max_tokens, stop}` in, and
//! `choices[0].message.content` out.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, CompletionRequest, GatewayError};
use crate::net;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key: None,
            timeout_secs: 60,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    /// Builds the blocking client. Must not be called from inside an async
    /// runtime.
    pub fn new(config: RemoteConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Backend(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(stop) = &request.stop {
            body["stop"] = json!(stop);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<reqwest::blocking::Response, reqwest::Error> {
        let mut builder = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        builder.send()
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        net::check_url(&self.config.endpoint)?;
        let body = self.body(request);
        let mut attempts = 0;
        let response = loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(resp) => break resp,
                Err(e) if attempts <= self.config.retries => {
                    let delay = self.config.backoff_ms << (attempts - 1);
                    log::warn!("completion attempt {attempts} failed ({e}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                }
                Err(e) => return Err(GatewayError::Transport { attempts, message: e.to_string() }),
            }
        };
        let status = response.status();
        let text = response.text().map_err(|e| GatewayError::Transport { attempts, message: e.to_string() })?;
        if !status.is_success() {
            return Err(GatewayError::Status { status: status.as_u16(), body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Protocol(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Protocol(format!("no choices[0].message.content in {text}")))
    }
}
