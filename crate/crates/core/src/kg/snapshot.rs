//! Graph snapshots as JSON Lines: one `meta` record, then `entity`,
//! `triple` and `community` records.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Entity, Hierarchy, KgError, KnowledgeGraph, Triple};

#[derive(Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
enum Record {
    Meta {
        corpus_hash: Option<String>,
        levels: usize,
        quality_trace: Vec<f64>,
    },
    Entity(Entity),
    Triple(Triple),
    Community {
        level: usize,
        community: usize,
        members: Vec<String>,
        summary: Option<String>,
    },
}

pub fn to_jsonl(graph: &KnowledgeGraph) -> String {
    let mut records = vec![Record::Meta {
        corpus_hash: graph.corpus_hash.clone(),
        levels: graph.hierarchy.as_ref().map_or(0, Hierarchy::level_count),
        quality_trace: graph.hierarchy.as_ref().map(|h| h.quality_trace.clone()).unwrap_or_default(),
    }];
    records.extend(graph.entities.values().cloned().map(Record::Entity));
    records.extend(graph.triples.values().cloned().map(Record::Triple));
    if let Some(h) = &graph.hierarchy {
        for level in 0..h.level_count() {
            for community in 0..h.community_count(level) {
                records.push(Record::Community {
                    level,
                    community,
                    members: h.members(level, community),
                    summary: h.summary(level, community).map(str::to_string),
                });
            }
        }
    }
    let mut out = String::new();
    for r in &records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<KnowledgeGraph, KgError> {
    let mut graph = KnowledgeGraph::default();
    let mut hierarchy: Option<Hierarchy> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(line).map_err(|e| KgError::Snapshot { line: i + 1, message: e.to_string() })?;
        match record {
            Record::Meta { corpus_hash, levels, quality_trace } => {
                graph.corpus_hash = corpus_hash;
                if levels > 0 {
                    hierarchy = Some(Hierarchy { levels: vec![BTreeMap::new(); levels], quality_trace, ..Default::default() });
                }
            }
            Record::Entity(e) => {
                graph.entities.insert(e.id.clone(), e);
            }
            Record::Triple(t) => {
                graph.triples.insert(t.key(), t);
            }
            Record::Community { level, community, members, summary } => {
                let h = hierarchy.as_mut().filter(|h| level < h.levels.len()).ok_or_else(|| KgError::Snapshot {
                    line: i + 1,
                    message: format!("community record for undeclared level {level}"),
                })?;
                for m in members {
                    h.levels[level].insert(m, community);
                }
                if let Some(s) = summary {
                    h.summaries.insert((level, community), s);
                }
            }
        }
    }
    graph.hierarchy = hierarchy;
    Ok(graph)
}

pub fn write_snapshot(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<(), KgError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| KgError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, to_jsonl(graph)).map_err(|e| KgError::Io(format!("{}: {e}", path.display())))
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<KnowledgeGraph, KgError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| KgError::Io(format!("{}: {e}", path.display())))?;
    from_jsonl(&text)
}
