//! Token-window chunking with overlap.

use serde::{Deserialize, Serialize};

use super::KgError;
use crate::corpus::Document;
use crate::text::tokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub source_doc: String,
    pub text: String,
    pub token_count: usize,
    /// Token offsets `[start, end)` in the source document.
    pub span: [usize; 2],
}

/// Splits each document into windows of `target` tokens advancing by
/// `target - overlap`. A document of at most `target` tokens is one chunk.
pub fn chunk_corpus(docs: &[Document], target: usize, overlap: usize) -> Result<Vec<Chunk>, KgError> {
    if overlap >= target {
        return Err(KgError::Param(format!("overlap {overlap} must be smaller than target {target}")));
    }
    let step = target - overlap;
    let mut chunks = Vec::new();
    for doc in docs {
        let toks = tokens(&doc.text);
        let total = toks.len();
        let mut i = 0;
        loop {
            let start = i * step;
            let end = (start + target).min(total);
            chunks.push(Chunk {
                id: format!("{}#{i}", doc.id),
                source_doc: doc.id.clone(),
                text: toks[start..end].join(" "),
                token_count: end - start,
                span: [start, end],
            });
            if end >= total {
                break;
            }
            i += 1;
        }
    }
    Ok(chunks)
}

/// Expected chunk count for a document of `total` tokens.
pub fn expected_chunks(total: usize, target: usize, overlap: usize) -> usize {
    if total <= target {
        1
    } else {
        (total - overlap).div_ceil(target - overlap)
    }
}
