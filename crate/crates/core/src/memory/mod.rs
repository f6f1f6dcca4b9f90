//! Memory backends feeding the agent's knowledge context.
//!
//! `kg` retrieves k-hop triples and community summaries from the knowledge
//! graph, `vector` retrieves similar raw chunks, `null` retrieves nothing.
//! All three are built from the same corpus and carry its hash so results
//! from different corpora are never compared.

pub mod vector;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{corpus_hash, Document};
use crate::kg::{chunk_corpus, retrieve_context, ContextBundle, KgError, KnowledgeGraph};
use crate::text::{token_count, truncate_tokens};
pub use vector::{VectorStore, DEFAULT_DIMENSION};

pub const DEFAULT_HOPS: usize = 2;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryKind {
    Kg,
    Vector,
    Null,
}

impl MemoryKind {
    pub const ALL: [MemoryKind; 3] = [MemoryKind::Kg, MemoryKind::Vector, MemoryKind::Null];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryKind::Kg => "kg",
            MemoryKind::Vector => "vector",
            MemoryKind::Null => "null",
        }
    }
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kg" | "kg2data" => Ok(MemoryKind::Kg),
            "vector" | "rag" | "rag2data" => Ok(MemoryKind::Vector),
            "null" | "none" | "chat" | "chat2data" => Ok(MemoryKind::Null),
            other => Err(format!("unknown memory kind {other:?} (expected kg, vector or null)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory backends built from different corpora ({0} vs {1})")]
    CorpusMismatch(String, String),
    #[error("knowledge graph snapshot has no corpus hash")]
    MissingCorpusHash,
    #[error(transparent)]
    Kg(#[from] KgError),
}

pub trait MemoryBackend: Send + Sync {
    fn kind(&self) -> MemoryKind;
    fn retrieve(&self, query: &str, token_budget: usize) -> ContextBundle;
    fn corpus_hash(&self) -> &str;
}

pub struct KgMemory {
    graph: Arc<KnowledgeGraph>,
    hops: usize,
    corpus_hash: String,
}

impl KgMemory {
    pub fn new(graph: Arc<KnowledgeGraph>, hops: usize) -> Result<Self, MemoryError> {
        let corpus_hash = graph.corpus_hash.clone().ok_or(MemoryError::MissingCorpusHash)?;
        Ok(Self { graph, hops, corpus_hash })
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }
}

impl MemoryBackend for KgMemory {
    fn kind(&self) -> MemoryKind {
        MemoryKind::Kg
    }

    fn retrieve(&self, query: &str, token_budget: usize) -> ContextBundle {
        retrieve_context(&self.graph, query, self.hops, token_budget)
    }

    fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }
}

pub struct VectorMemory {
    store: VectorStore,
    k: usize,
    corpus_hash: String,
}

impl VectorMemory {
    pub fn build(docs: &[Document], chunk_target: usize, chunk_overlap: usize, k: usize) -> Result<Self, MemoryError> {
        let chunks = chunk_corpus(docs, chunk_target, chunk_overlap)?;
        Ok(Self { store: VectorStore::build(&chunks, DEFAULT_DIMENSION), k, corpus_hash: corpus_hash(docs) })
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }
}

impl MemoryBackend for VectorMemory {
    fn kind(&self) -> MemoryKind {
        MemoryKind::Vector
    }

    /// Concatenates the top-k chunks; the first chunk that does not fit is
    /// cut at a token boundary and nothing follows it.
    fn retrieve(&self, query: &str, token_budget: usize) -> ContextBundle {
        let mut passages = Vec::new();
        let mut used = 0;
        for hit in self.store.topk(query, self.k) {
            let cost = token_count(&hit.entry.text);
            if used + cost <= token_budget {
                passages.push(hit.entry.text.split_whitespace().collect::<Vec<_>>().join(" "));
                used += cost;
            } else {
                let rest = truncate_tokens(&hit.entry.text, token_budget - used);
                if !rest.is_empty() {
                    passages.push(rest);
                }
                break;
            }
        }
        ContextBundle {
            rendered: passages.join("\n"),
            passages,
            token_budget,
            ..Default::default()
        }
    }

    fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }
}

pub struct NullMemory {
    corpus_hash: String,
}

impl NullMemory {
    pub fn new(docs: &[Document]) -> Self {
        Self { corpus_hash: corpus_hash(docs) }
    }

    pub fn with_hash(corpus_hash: impl Into<String>) -> Self {
        Self { corpus_hash: corpus_hash.into() }
    }
}

impl MemoryBackend for NullMemory {
    fn kind(&self) -> MemoryKind {
        MemoryKind::Null
    }

    fn retrieve(&self, _query: &str, token_budget: usize) -> ContextBundle {
        ContextBundle::empty(token_budget)
    }

    fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }
}

/// Checks that every backend was built from the same corpus.
pub fn ensure_same_corpus(backends: &[&dyn MemoryBackend]) -> Result<(), MemoryError> {
    if let Some(first) = backends.first() {
        for b in &backends[1..] {
            if b.corpus_hash() != first.corpus_hash() {
                return Err(MemoryError::CorpusMismatch(first.corpus_hash().into(), b.corpus_hash().into()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<Document> {
        vec![
            Document::new("p", "rain gauge measures precipitation every hour at the station"),
            Document::new("w", "anemometer measures wind speed"),
        ]
    }

    #[test]
    fn null_memory_is_empty() {
        let m = NullMemory::new(&docs());
        let b = m.retrieve("anything", 100);
        assert!(b.rendered.is_empty() && b.is_empty());
        assert_eq!(m.corpus_hash(), corpus_hash(&docs()));
    }

    #[test]
    fn vector_truncates_first_chunk_at_token_boundary() {
        let m = VectorMemory::build(&docs(), 300, 50, DEFAULT_TOP_K).unwrap();
        let b = m.retrieve("precipitation rain gauge", 4);
        assert_eq!(b.rendered, "rain gauge measures precipitation");
        let full = m.retrieve("precipitation rain gauge", 100);
        assert_eq!(full.passages.len(), 2);
        assert!(full.rendered.starts_with("rain gauge"));
    }

    #[test]
    fn corpus_mismatch_is_refused() {
        let a = NullMemory::new(&docs());
        let b = NullMemory::new(&docs()[..1]);
        assert!(ensure_same_corpus(&[&a, &a]).is_ok());
        assert!(matches!(ensure_same_corpus(&[&a, &b]), Err(MemoryError::CorpusMismatch(..))));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("RAG2data".parse::<MemoryKind>().unwrap(), MemoryKind::Vector);
        assert!("vague".parse::<MemoryKind>().is_err());
    }
}
