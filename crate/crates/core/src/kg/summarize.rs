//! Community summarization.
//!
//! Singleton communities reuse the entity description; larger ones are
//! summarized by the model from their member list and internal relations.

use super::{Hierarchy, KgError, KnowledgeGraph};
use crate::gateway::{ChatMessage, CompletionRequest, Gateway};

pub const SUMMARY_SYSTEM_PROMPT: &str = "You summarize one community of a meteorological knowledge graph.
Write two or three sentences stating what the entities have in common and how they relate.
Name the most important entities exactly as written. Do not invent facts.";

/// Caps on prompt size for very large communities.
const MAX_ENTITY_LINES: usize = 40;
const MAX_RELATION_LINES: usize = 40;

pub fn summary_request(graph: &KnowledgeGraph, hierarchy: &Hierarchy, level: usize, community: usize) -> CompletionRequest {
    let members = hierarchy.members(level, community);
    let mut user = format!("Community {community} at level {level}\nEntities:\n");
    for id in members.iter().take(MAX_ENTITY_LINES) {
        if let Some(e) = graph.entity(id) {
            user.push_str(&format!("- {} ({}): {}\n", e.id, e.entity_type, e.description));
        }
    }
    let mut relations: Vec<_> = graph
        .triples
        .values()
        .filter(|t| hierarchy.community_of(level, &t.subject) == Some(community) && hierarchy.community_of(level, &t.object) == Some(community))
        .collect();
    relations.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.key().cmp(&b.key())));
    user.push_str("Relations:\n");
    for t in relations.into_iter().take(MAX_RELATION_LINES) {
        user.push_str(&format!("- {} {} {}\n", t.subject, t.predicate, t.object));
    }
    CompletionRequest::new(vec![ChatMessage::system(SUMMARY_SYSTEM_PROMPT), ChatMessage::user(user)]).with_max_tokens(256)
}

pub fn summarize_communities(graph: &KnowledgeGraph, mut hierarchy: Hierarchy, gateway: &Gateway) -> Result<Hierarchy, KgError> {
    hierarchy.summaries.clear();
    for level in 0..hierarchy.level_count() {
        for community in 0..hierarchy.community_count(level) {
            let members = hierarchy.members(level, community);
            let summary = if members.len() == 1 {
                graph.entity(&members[0]).map(|e| e.description.clone()).unwrap_or_default()
            } else {
                let request = summary_request(graph, &hierarchy, level, community);
                gateway
                    .complete(&request)
                    .map_err(|source| KgError::Summary { level, community, source })?
                    .trim()
                    .to_string()
            };
            hierarchy.summaries.insert((level, community), summary);
        }
    }
    Ok(hierarchy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Cassette, GatewayError};
    use crate::kg::{Curation, Entity, EntityType};
    use std::collections::BTreeMap;

    fn graph() -> KnowledgeGraph {
        let c = Curation::default();
        let mut g = KnowledgeGraph::default();
        g.merge(
            vec![
                Entity::from_surface("a", EntityType::Other, "alpha", &c),
                Entity::from_surface("b", EntityType::Other, "beta", &c),
                Entity::from_surface("c", EntityType::Other, "gamma", &c),
            ],
            vec![crate::kg::tests::triple("a", "p", "b", "x")],
        );
        g
    }

    fn hierarchy() -> Hierarchy {
        let level: BTreeMap<String, usize> = [("a".into(), 0), ("b".into(), 0), ("c".into(), 1)].into();
        Hierarchy { levels: vec![level], ..Default::default() }
    }

    #[test]
    fn singleton_uses_description_and_strict_miss_names_community() {
        let g = graph();
        let err = summarize_communities(&g, hierarchy(), &Gateway::replay(Cassette::default())).unwrap_err();
        match err {
            KgError::Summary { level: 0, community: 0, source: GatewayError::CassetteMiss { key, .. } } => {
                assert_eq!(key, summary_request(&g, &hierarchy(), 0, 0).key())
            }
            other => panic!("unexpected {other}"),
        }

        let mut h = hierarchy();
        h.levels[0].insert("b".into(), 2);
        let gw = Gateway::replay(Cassette::default());
        let h = summarize_communities(&g, h, &gw).unwrap();
        assert_eq!(h.summary(0, 1), Some("gamma"));
        assert_eq!(h.summary(0, 0), Some("alpha"));
        assert_eq!(gw.stats().misses, 0);
    }
}
