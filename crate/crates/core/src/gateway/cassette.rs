use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub request_digest: String,
    pub response: String,
}

/// Recorded responses keyed by canonical request hash. Stored as JSON Lines
/// sorted by key so files diff cleanly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cassette {
    entries: BTreeMap<String, CassetteEntry>,
}

impl Cassette {
    pub fn get(&self, key: &str) -> Option<&CassetteEntry> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, entry: CassetteEntry) {
        self.entries.insert(entry.key.clone(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.entries.values()
    }

    pub fn merge(&mut self, other: Cassette) {
        self.entries.extend(other.entries);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut cassette = Cassette::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            cassette.insert(entry);
        }
        Ok(cassette)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let io = |message: String| GatewayError::Io { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        Self::from_jsonl(&text).map_err(io)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| GatewayError::Io { path: path.display().to_string(), message: e.to_string() };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut file = std::fs::File::create(path).map_err(io)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }
}
