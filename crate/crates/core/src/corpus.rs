//! Corpus documents and their content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into() }
    }
}

/// Loads every `.txt` file under `dir`, sorted by relative path. Document ids
/// are relative paths without the extension.
pub fn load_corpus(dir: impl AsRef<Path>) -> std::io::Result<Vec<Document>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("corpus directory {} not found", dir.display()),
        ));
    }
    let mut docs = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "txt") {
            continue;
        }
        let rel = path.strip_prefix(dir).unwrap_or(path).with_extension("");
        let id = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        docs.push(Document { id, text: std::fs::read_to_string(path)? });
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}

/// sha256 over the documents sorted by id, length-prefixed so boundaries are
/// unambiguous.
pub fn corpus_hash(docs: &[Document]) -> String {
    let mut sorted: Vec<&Document> = docs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut hasher = Sha256::new();
    for doc in sorted {
        for part in [doc.id.as_bytes(), doc.text.as_bytes()] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part);
        }
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_order_but_not_content() {
        let a = vec![Document::new("a", "x y"), Document::new("b", "z")];
        let b = vec![Document::new("b", "z"), Document::new("a", "x y")];
        assert_eq!(corpus_hash(&a), corpus_hash(&b));
        let c = vec![Document::new("a", "x"), Document::new("b", "y z")];
        assert_ne!(corpus_hash(&a), corpus_hash(&c));
    }

    #[test]
    fn loads_txt_files_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "two").unwrap();
        std::fs::write(dir.path().join("a.txt"), "one").unwrap();
        std::fs::write(dir.path().join("skip.md"), "no").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs, vec![Document::new("a", "one"), Document::new("b", "two")]);
        assert!(load_corpus(dir.path().join("missing")).is_err());
    }
}
