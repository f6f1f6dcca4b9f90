//! Regenerates the shipped cassettes and graph snapshot with the scripted
//! model, so every offline run replays recorded completions.

use std::sync::Arc;

use serde::Serialize;

use super::{scripted_backend, Config, InterfaceError, Workspace};
use crate::agent::trace_id;
use crate::eval::pairs::generate_pairs;
use crate::gateway::{Cassette, Gateway, GatewayMode};
use crate::kg::build_graph;
use crate::kg::snapshot::write_snapshot;
use crate::memory::MemoryKind;

#[derive(Debug, Clone, Serialize)]
pub struct FixtureSummary {
    pub kg_build_entries: usize,
    pub entities: usize,
    pub triples: usize,
    pub levels: usize,
    pub pair_entries: usize,
    pub gold_entries: Vec<(MemoryKind, usize)>,
}

fn recorder(config: &Config) -> Result<Gateway, InterfaceError> {
    Ok(Gateway::new(GatewayMode::Record, Some(scripted_backend(config)?), Cassette::default()))
}

/// Records `kg_build.jsonl`, the graph snapshot, `pairs.jsonl` and one gold
/// agent cassette per memory kind, overwriting existing files.
pub fn record_fixtures(config: &Config) -> Result<FixtureSummary, InterfaceError> {
    let cassettes = config.path(&config.cassettes);

    let mut workspace = Workspace::load(config.clone())?;
    let gw = recorder(config)?;
    let graph = build_graph(&workspace.docs, &gw, &workspace.curation, &config.kg)?;
    gw.cassette().save(cassettes.join("kg_build.jsonl"))?;
    write_snapshot(&graph, config.path(&config.graph))?;
    let kg_build_entries = gw.cassette().len();
    let levels = graph.hierarchy.as_ref().map_or(0, |h| h.level_count());
    let (entities, triples) = (graph.entity_count(), graph.edge_count());
    workspace.graph = Some(Arc::new(graph));

    let gw = recorder(config)?;
    let generated = generate_pairs(&workspace.catalog, &gw, 2)?;
    gw.cassette().save(cassettes.join("pairs.jsonl"))?;
    let pair_entries = gw.cassette().len();
    let cases = workspace.cases()?;
    for (g, c) in generated.iter().zip(&cases) {
        if g.instruction != c.instruction {
            log::warn!("generated pair {} differs from the shipped case {}", g.id, c.id);
        }
    }

    let mut gold_entries = Vec::new();
    for kind in MemoryKind::ALL {
        let gw = Arc::new(recorder(config)?);
        let agent = workspace.agent(kind, gw.clone())?;
        for case in &cases {
            agent.run(&case.instruction, &trace_id(kind, &case.instruction, &case.id));
        }
        gw.cassette().save(config.gold_cassette(kind))?;
        gold_entries.push((kind, gw.cassette().len()));
    }
    Ok(FixtureSummary { kg_build_entries, entities, triples, levels, pair_entries, gold_entries })
}
