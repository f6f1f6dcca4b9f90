//! Hashed TF-IDF vector store.
//!
//! Terms are stemmed words hashed (FNV-1a) into a fixed number of buckets.
//! Term frequencies are weighted by `idf = ln((1 + N) / (1 + df)) + 1` over
//! the indexed chunks and L2-normalized, so cosine similarity is a dot
//! product.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kg::Chunk;
use crate::text::stems;

pub const DEFAULT_DIMENSION: usize = 4096;

fn fnv1a(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn term_counts(text: &str, dimension: usize) -> Vec<(usize, f64)> {
    let mut counts = std::collections::BTreeMap::new();
    for term in stems(text) {
        *counts.entry((fnv1a(&term) % dimension as u64) as usize).or_insert(0.0) += 1.0;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorEntry {
    pub chunk_id: String,
    pub text: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dimension: usize,
    idf: Vec<f64>,
    entries: Vec<VectorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a> {
    pub entry: &'a VectorEntry,
    pub similarity: f64,
}

impl VectorStore {
    pub fn build(chunks: &[Chunk], dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        let mut df = vec![0.0; dimension];
        let counts: Vec<Vec<(usize, f64)>> = chunks.iter().map(|c| term_counts(&c.text, dimension)).collect();
        for doc in &counts {
            for &(bucket, _) in doc {
                df[bucket] += 1.0;
            }
        }
        let n = chunks.len() as f64;
        let idf = df.iter().map(|d| ((1.0 + n) / (1.0 + d)).ln() + 1.0).collect();
        let mut store = Self { dimension, idf, entries: Vec::with_capacity(chunks.len()) };
        for chunk in chunks {
            let vector = store.embed(&chunk.text);
            store.entries.push(VectorEntry { chunk_id: chunk.id.clone(), text: chunk.text.clone(), vector });
        }
        store
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VectorEntry] {
        &self.entries
    }

    /// TF-IDF vector of `text`, L2-normalized when nonzero.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for (bucket, tf) in term_counts(text, self.dimension) {
            v[bucket] = tf * self.idf[bucket];
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    /// Top `k` entries by cosine similarity; ties broken by chunk id.
    pub fn topk(&self, query: &str, k: usize) -> Vec<Scored<'_>> {
        let q = self.embed(query);
        let mut scored: Vec<Scored> = self
            .entries
            .iter()
            .map(|e| Scored { entry: e, similarity: cosine(&q, &e.vector) })
            .collect();
        scored.sort_by(|a, b| {
            b.similarity.partial_cmp(&a.similarity).unwrap_or(Ordering::Equal).then_with(|| a.entry.chunk_id.cmp(&b.entry.chunk_id))
        });
        scored.truncate(k);
        scored
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("entry serializes") + "\n").collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
