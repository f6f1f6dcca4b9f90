//! Meteorological knowledge graph.
//!
//! Build pipeline: chunk the corpus, extract entities and relations with the
//! model, merge them under the curated alias table, prune synonym and
//! duplicate edges, detect a multi-level community hierarchy with Leiden,
//! and summarize each community. The built graph is immutable and answers
//! k-hop context queries for the agent.

pub mod chunk;
pub mod curation;
pub mod extract;
pub mod leiden;
pub mod pipeline;
pub mod prune;
pub mod retrieve;
pub mod snapshot;
pub mod summarize;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_corpus, Chunk};
pub use curation::Curation;
pub use extract::{extract_graph, Extraction};
pub use leiden::{leiden_partition, Hierarchy, LeidenConfig, WeightedGraph};
pub use pipeline::{build_graph, KgConfig};
pub use prune::prune_redundant;
pub use retrieve::{retrieve_context, ContextBundle};
pub use summarize::summarize_communities;

use crate::gateway::GatewayError;
use crate::text::{normalize_name, slug};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("parameter error: {0}")]
    Param(String),
    #[error("extraction output for chunk {chunk} violates the grammar ({reason}): {raw:?}")]
    ExtractionFormat { chunk: String, reason: String, raw: String },
    #[error("extraction of chunk {chunk} failed: {source}")]
    Extraction { chunk: String, source: GatewayError },
    #[error("summary of community {community} at level {level} failed: {source}")]
    Summary { level: usize, community: usize, source: GatewayError },
    #[error("curation error: {0}")]
    Curation(String),
    #[error("snapshot error at line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("graph is empty")]
    EmptyGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    MeteorologicalElement,
    Instrument,
    Event,
    Dataset,
    Api,
    Location,
    Other,
}

impl EntityType {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::MeteorologicalElement => "meteorological_element",
            EntityType::Instrument => "instrument",
            EntityType::Event => "event",
            EntityType::Dataset => "dataset",
            EntityType::Api => "api",
            EntityType::Location => "location",
            EntityType::Other => "other",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = ();

    /// Accepts loose spellings; anything unrecognized is an error so callers
    /// can decide to fall back to [`EntityType::Other`].
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match slug(s).as_str() {
            "meteorological_element" | "element" | "variable" => EntityType::MeteorologicalElement,
            "instrument" | "sensor" => EntityType::Instrument,
            "event" | "phenomenon" => EntityType::Event,
            "dataset" | "data_source" => EntityType::Dataset,
            "api" | "tool" => EntityType::Api,
            "location" | "place" => EntityType::Location,
            "other" => EntityType::Other,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub canonical_name: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    /// Normalized surface forms, including the canonical name.
    pub aliases: BTreeSet<String>,
    pub description: String,
}

impl Entity {
    /// Entity for `name` as resolved by the alias table.
    pub fn from_surface(name: &str, entity_type: EntityType, description: &str, curation: &Curation) -> Self {
        let canonical = curation.resolve_name(name);
        let mut aliases = BTreeSet::new();
        aliases.insert(canonical.clone());
        let surface = normalize_name(name);
        if !surface.is_empty() {
            aliases.insert(surface);
        }
        Self {
            id: slug(&canonical),
            canonical_name: canonical,
            entity_type,
            aliases,
            description: description.trim().to_string(),
        }
    }

    /// Commutative merge: aliases union; the more specific type wins; the
    /// longer description wins, ties broken lexicographically.
    fn absorb(&mut self, other: &Entity) {
        self.aliases.extend(other.aliases.iter().cloned());
        if self.entity_type == EntityType::Other
            || (other.entity_type != EntityType::Other && other.entity_type < self.entity_type)
        {
            self.entity_type = other.entity_type;
        }
        let better = (other.description.len(), std::cmp::Reverse(&other.description))
            > (self.description.len(), std::cmp::Reverse(&self.description));
        if better {
            self.description = other.description.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub weight: f64,
    pub provenance: BTreeSet<String>,
    pub confidence: f64,
}

impl Triple {
    pub fn key(&self) -> (String, String, String) {
        (self.subject.clone(), self.predicate.clone(), self.object.clone())
    }

    fn absorb(&mut self, other: &Triple) {
        self.weight += other.weight;
        self.provenance.extend(other.provenance.iter().cloned());
        self.confidence = self.confidence.max(other.confidence);
    }
}

/// Entities, deduplicated triples and (once computed) the community
/// hierarchy with summaries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    pub entities: BTreeMap<String, Entity>,
    pub triples: BTreeMap<(String, String, String), Triple>,
    pub hierarchy: Option<Hierarchy>,
    pub corpus_hash: Option<String>,
}

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.triples.len()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn triple(&self, s: &str, p: &str, o: &str) -> Option<&Triple> {
        self.triples.get(&(s.to_string(), p.to_string(), o.to_string()))
    }

    pub fn add_entity(&mut self, entity: Entity) {
        match self.entities.get_mut(&entity.id) {
            Some(existing) => existing.absorb(&entity),
            None => {
                self.entities.insert(entity.id.clone(), entity);
            }
        }
    }

    /// Inserts a triple; an identical `(s, p, o)` increases weight and unions
    /// provenance instead of adding an edge. Self-loops are dropped.
    pub fn add_triple(&mut self, triple: Triple) -> bool {
        if triple.subject == triple.object {
            log::warn!("dropping self-loop triple on {}", triple.subject);
            return false;
        }
        match self.triples.get_mut(&triple.key()) {
            Some(existing) => existing.absorb(&triple),
            None => {
                self.triples.insert(triple.key(), triple);
            }
        }
        true
    }

    /// Merges extracted entities and triples into the graph.
    pub fn merge(&mut self, entities: Vec<Entity>, triples: Vec<Triple>) {
        for e in entities {
            self.add_entity(e);
        }
        for t in triples {
            self.add_triple(t);
        }
    }

    pub fn merge_graph(&mut self, other: &KnowledgeGraph) {
        self.merge(other.entities.values().cloned().collect(), other.triples.values().cloned().collect());
    }

    /// Attaches every alias-table variant to the entity it resolves to.
    pub fn apply_curation(&mut self, curation: &Curation) {
        for (variant, _) in curation.aliases() {
            let id = slug(&curation.resolve_name(variant));
            if let Some(entity) = self.entities.get_mut(&id) {
                entity.aliases.insert(variant.clone());
            }
        }
    }

    /// Undirected weighted graph over entities (sorted by id) for community
    /// detection. Parallel and reverse edges are summed.
    pub fn undirected(&self) -> (Vec<String>, WeightedGraph) {
        let ids: Vec<String> = self.entities.keys().cloned().collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for t in self.triples.values() {
            let (Some(&a), Some(&b)) = (index.get(t.subject.as_str()), index.get(t.object.as_str())) else {
                continue;
            };
            if a != b {
                *edges.entry((a.min(b), a.max(b))).or_default() += t.weight;
            }
        }
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().map(|((a, b), w)| (a, b, w)).collect();
        (ids.clone(), WeightedGraph::from_edges(ids.len(), &edges))
    }
}

/// Merges two graphs into a new one (the operation is commutative).
pub fn merge_graph(mut graph: KnowledgeGraph, entities: Vec<Entity>, triples: Vec<Triple>) -> KnowledgeGraph {
    graph.merge(entities, triples);
    graph
}
