//! Single choke-point for model calls.
//!
//! A [`Gateway`] pairs an optional live [`ChatBackend`] with a [`Cassette`]
//! of recorded responses. Replay modes answer from the cassette keyed by a
//! content hash of the canonical request; record mode forwards to the backend
//! and stores every response.

mod cassette;
pub mod remote;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry};
pub use remote::{RemoteBackend, RemoteConfig};

use crate::canonical::canonical_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl CompletionRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self { messages, temperature: 0.0, max_tokens: 1024, stop: None }
    }

    pub fn with_stop(mut self, stop: &[&str]) -> Self {
        self.stop = Some(stop.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages must not be empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be a non-negative number".into()));
        }
        for m in &self.messages {
            if m.role != Role::Assistant && m.content.trim().is_empty() {
                return Err(GatewayError::InvalidRequest(format!("empty {:?} message", m.role)));
            }
        }
        Ok(())
    }

    /// Canonical serialization: sorted fields, trailing whitespace trimmed
    /// per message.
    pub fn canonical(&self) -> String {
        let messages: Vec<_> = self
            .messages
            .iter()
            .map(|m| json!({"role": m.role, "content": m.content.trim_end()}))
            .collect();
        canonical_json(&json!({
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stop": self.stop,
        }))
    }

    pub fn key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Short human-readable tail of the request, stored next to the key so
    /// cassette files can be audited.
    pub fn digest(&self) -> String {
        let last = self.messages.last().map(|m| m.content.trim_end()).unwrap_or("");
        let chars: Vec<char> = last.chars().collect();
        let start = chars.len().saturating_sub(160);
        let tail: String = chars[start..].iter().collect();
        format!("{} message(s); …{}", self.messages.len(), tail.replace('\n', " | "))
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cassette miss for request key {key} ({digest})")]
    CassetteMiss { key: String, digest: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("remote returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Protocol(String),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Network(#[from] crate::net::NetworkForbidden),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("cassette io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Anything that can answer a completion request.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    /// Backend only; nothing recorded.
    Live,
    Record,
    ReplayStrict,
    /// Cassette first, backend on a miss.
    ReplayFallthrough,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub hits: u64,
    pub misses: u64,
    pub backend_calls: u64,
}

pub struct Gateway {
    mode: GatewayMode,
    backend: Option<Arc<dyn ChatBackend>>,
    cassette: Mutex<Cassette>,
    path: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
    backend_calls: AtomicU64,
}

impl Gateway {
    pub fn new(mode: GatewayMode, backend: Option<Arc<dyn ChatBackend>>, cassette: Cassette) -> Self {
        Self {
            mode,
            backend,
            cassette: Mutex::new(cassette),
            path: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
        }
    }

    pub fn replay(cassette: Cassette) -> Self {
        Self::new(GatewayMode::ReplayStrict, None, cassette)
    }

    pub fn replay_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::replay(Cassette::load(path)?))
    }

    pub fn live(backend: Arc<dyn ChatBackend>) -> Self {
        Self::new(GatewayMode::Live, Some(backend), Cassette::default())
    }

    /// Record mode persisting to `path` on [`Gateway::save`]. An existing
    /// cassette at `path` is extended.
    pub fn recording(backend: Arc<dyn ChatBackend>, path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let cassette = if path.exists() { Cassette::load(path)? } else { Cassette::default() };
        let mut gw = Self::new(GatewayMode::Record, Some(backend), cassette);
        gw.path = Some(path.to_path_buf());
        Ok(gw)
    }

    pub fn with_path(mut self, path: impl AsRef<Path>) -> Self {
        self.path = Some(path.as_ref().to_path_buf());
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.load(Ordering::SeqCst),
            backend_calls: self.backend_calls.load(Ordering::SeqCst),
        }
    }

    fn backend(&self) -> Result<&Arc<dyn ChatBackend>, GatewayError> {
        self.backend
            .as_ref()
            .ok_or_else(|| GatewayError::Mode(format!("{:?} mode requires a backend", self.mode)))
    }

    fn call_backend(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let backend = self.backend()?;
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        backend.complete(request)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.check()?;
        let key = request.key();
        match self.mode {
            GatewayMode::Live => self.call_backend(request),
            GatewayMode::Record => {
                let response = self.call_backend(request)?;
                self.record(request, &response)?;
                Ok(response)
            }
            GatewayMode::ReplayStrict | GatewayMode::ReplayFallthrough => {
                if let Some(entry) = self.cassette.lock().expect("cassette lock").get(&key) {
                    self.hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(entry.response.clone());
                }
                self.misses.fetch_add(1, Ordering::SeqCst);
                if self.mode == GatewayMode::ReplayStrict {
                    log::warn!("cassette miss {key}");
                    return Err(GatewayError::CassetteMiss { key, digest: request.digest() });
                }
                self.call_backend(request)
            }
        }
    }

    /// Stores `response` under the request's key; last write wins.
    pub fn record(&self, request: &CompletionRequest, response: &str) -> Result<(), GatewayError> {
        if self.mode != GatewayMode::Record {
            return Err(GatewayError::Mode(format!("cannot record in {:?} mode", self.mode)));
        }
        self.cassette.lock().expect("cassette lock").insert(CassetteEntry {
            key: request.key(),
            request_digest: request.digest(),
            response: response.to_string(),
        });
        Ok(())
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().expect("cassette lock").clone()
    }

    /// Writes the cassette to the configured path, if any.
    pub fn save(&self) -> Result<(), GatewayError> {
        if let Some(path) = &self.path {
            self.cassette.lock().expect("cassette lock").save(path)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl ChatBackend for Echo {
        fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
            Ok(format!("echo: {}", request.messages.last().unwrap().content.trim_end()))
        }
    }

    fn req(text: &str) -> CompletionRequest {
        CompletionRequest::new(vec![ChatMessage::system("sys"), ChatMessage::user(text)]).with_stop(&["Observation:"])
    }

    #[test]
    fn trailing_whitespace_does_not_change_key() {
        assert_eq!(req("hello").key(), req("hello  \n\t").key());
        assert_ne!(req("hello").key(), req(" hello").key());
        assert_eq!(req("x").key().len(), 64);
    }

    #[test]
    fn key_ignores_field_order_but_not_values() {
        let a = req("x");
        let mut b = a.clone();
        b.temperature = 0.0;
        assert_eq!(a.key(), b.key());
        b.temperature = 0.5;
        assert_ne!(a.key(), b.key());
        let mut c = a.clone();
        c.stop = None;
        assert_ne!(a.key(), c.key());
    }

    #[test]
    fn record_then_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let gw = Gateway::recording(Arc::new(Echo), &path).unwrap();
        assert_eq!(gw.complete(&req("hi")).unwrap(), "echo: hi");
        gw.save().unwrap();

        let replay = Gateway::replay_file(&path).unwrap();
        assert_eq!(replay.complete(&req("hi  ")).unwrap(), "echo: hi");
        assert_eq!(replay.stats(), GatewayStats { hits: 1, misses: 0, backend_calls: 0 });
        assert_eq!(Cassette::load(&path).unwrap(), gw.cassette());
    }

    #[test]
    fn strict_miss_names_the_key() {
        let gw = Gateway::replay(Cassette::default());
        let err = gw.complete(&req("nope")).unwrap_err();
        match err {
            GatewayError::CassetteMiss { key, .. } => assert_eq!(key, req("nope").key()),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fallthrough_uses_backend_on_miss() {
        let gw = Gateway::new(GatewayMode::ReplayFallthrough, Some(Arc::new(Echo)), Cassette::default());
        assert_eq!(gw.complete(&req("a")).unwrap(), "echo: a");
        assert_eq!(gw.stats().backend_calls, 1);
    }

    #[test]
    fn overwrite_and_mode_errors() {
        let gw = Gateway::new(GatewayMode::Record, Some(Arc::new(Echo)), Cassette::default());
        gw.record(&req("k"), "first").unwrap();
        gw.record(&req("k"), "second").unwrap();
        assert_eq!(gw.cassette().len(), 1);
        assert_eq!(gw.cassette().get(&req("k").key()).unwrap().response, "second");

        let replay = Gateway::replay(Cassette::default());
        assert!(matches!(replay.record(&req("k"), "x"), Err(GatewayError::Mode(_))));
    }

    #[test]
    fn invalid_requests_rejected() {
        let gw = Gateway::live(Arc::new(Echo));
        assert!(gw.complete(&CompletionRequest::new(vec![])).is_err());
        assert!(gw.complete(&CompletionRequest::new(vec![ChatMessage::user("  ")])).is_err());
    }
}
