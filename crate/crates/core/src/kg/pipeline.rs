//! End-to-end graph build.

use serde::{Deserialize, Serialize};

use super::{
    chunk_corpus, extract_graph, leiden_partition, prune_redundant, summarize_communities, Curation, KgError,
    KnowledgeGraph, LeidenConfig,
};
use crate::corpus::{corpus_hash, Document};
use crate::gateway::Gateway;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgConfig {
    pub chunk_target: usize,
    pub chunk_overlap: usize,
    pub leiden: LeidenConfig,
}

impl Default for KgConfig {
    fn default() -> Self {
        Self { chunk_target: 300, chunk_overlap: 50, leiden: LeidenConfig::default() }
    }
}

/// chunk → extract → merge → curate → prune → Leiden → summarize.
pub fn build_graph(docs: &[Document], gateway: &Gateway, curation: &Curation, config: &KgConfig) -> Result<KnowledgeGraph, KgError> {
    let chunks = chunk_corpus(docs, config.chunk_target, config.chunk_overlap)?;
    log::info!("extracting from {} chunks of {} documents", chunks.len(), docs.len());
    let mut graph = KnowledgeGraph::default();
    for chunk in &chunks {
        let extraction = extract_graph(chunk, gateway, &graph, curation)?;
        graph.merge(extraction.entities, extraction.triples);
    }
    graph.apply_curation(curation);
    let mut graph = prune_redundant(&graph, curation);
    let hierarchy = leiden_partition(&graph, &config.leiden)?;
    log::info!(
        "{} entities, {} triples, {} community levels",
        graph.entity_count(),
        graph.edge_count(),
        hierarchy.level_count()
    );
    graph.hierarchy = Some(summarize_communities(&graph, hierarchy, gateway)?);
    graph.corpus_hash = Some(corpus_hash(docs));
    Ok(graph)
}
