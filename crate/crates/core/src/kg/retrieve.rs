//! Query-time context retrieval over the built graph.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, Triple};
use crate::text::{stems, token_count};

/// Knowledge context handed to the agent. `rendered` never exceeds
/// `token_budget` whitespace tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub triples: Vec<String>,
    pub summaries: Vec<String>,
    /// Raw text passages (vector memory only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passages: Vec<String>,
    pub token_budget: usize,
    pub rendered: String,
}

impl ContextBundle {
    pub fn empty(token_budget: usize) -> Self {
        Self { token_budget, ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.rendered.trim().is_empty()
    }
}

pub fn render_triple(t: &Triple) -> String {
    format!("{} {} {}", t.subject, t.predicate, t.object)
}

/// Entities mentioned in `query`: scanning left to right, the longest alias
/// (compared as stemmed word sequences) starting at each position wins.
pub fn link_entities(graph: &KnowledgeGraph, query: &str) -> Vec<String> {
    let mut index: BTreeMap<Vec<String>, String> = BTreeMap::new();
    let mut max_len = 0;
    for entity in graph.entities.values() {
        for alias in entity.aliases.iter().chain(std::iter::once(&entity.id)) {
            let key = stems(alias);
            if key.is_empty() {
                continue;
            }
            max_len = max_len.max(key.len());
            // Entities are visited in id order, so a shared alias links to the smallest id.
            index.entry(key).or_insert_with(|| entity.id.clone());
        }
    }
    let words = stems(query);
    let mut linked = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let longest = (1..=max_len.min(words.len() - i))
            .rev()
            .find_map(|len| index.get(&words[i..i + len]).map(|id| (len, id)));
        match longest {
            Some((len, id)) => {
                if !linked.contains(id) {
                    linked.push(id.clone());
                }
                i += len;
            }
            None => i += 1,
        }
    }
    linked
}

/// Triples within `hops` of the seeds in breadth-first order. Each node's
/// incident triples are visited by descending weight, then `(s, p, o)`.
pub fn bfs_triples<'g>(graph: &'g KnowledgeGraph, seeds: &[String], hops: usize) -> Vec<&'g Triple> {
    let mut incident: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    for t in graph.triples.values() {
        incident.entry(t.subject.as_str()).or_default().push(t);
        incident.entry(t.object.as_str()).or_default().push(t);
    }
    for list in incident.values_mut() {
        list.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.key().cmp(&b.key())));
    }
    let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    for s in seeds {
        if depth.insert(s.as_str(), 0).is_none() {
            queue.push_back(s.as_str());
        }
    }
    let mut emitted: HashSet<(&str, &str, &str)> = HashSet::new();
    let mut out = Vec::new();
    while let Some(node) = queue.pop_front() {
        let d = depth[node];
        if d >= hops {
            continue;
        }
        for t in incident.get(node).map(Vec::as_slice).unwrap_or(&[]) {
            if emitted.insert((t.subject.as_str(), t.predicate.as_str(), t.object.as_str())) {
                out.push(*t);
            }
            let other = if t.subject == node { t.object.as_str() } else { t.subject.as_str() };
            if !depth.contains_key(other) {
                depth.insert(other, d + 1);
                queue.push_back(other);
            }
        }
    }
    out
}

/// Greedily packs whole items in order, stopping at the first that does not
/// fit. Returns how many items were taken.
pub fn pack(items: &[String], budget: usize) -> usize {
    let mut used = 0;
    for (i, item) in items.iter().enumerate() {
        let cost = token_count(item);
        if used + cost > budget {
            return i;
        }
        used += cost;
    }
    items.len()
}

pub fn retrieve_context(graph: &KnowledgeGraph, query: &str, hops: usize, token_budget: usize) -> ContextBundle {
    let linked = link_entities(graph, query);
    let triples: Vec<String> = bfs_triples(graph, &linked, hops).into_iter().map(render_triple).collect();
    let mut summaries = Vec::new();
    if let Some(h) = &graph.hierarchy {
        let mut seen = BTreeSet::new();
        if linked.is_empty() {
            let top = h.level_count().saturating_sub(1);
            for c in 0..h.community_count(top) {
                if let Some(s) = h.summary(top, c) {
                    summaries.push(s.to_string());
                }
            }
        } else {
            for level in 0..h.level_count() {
                for id in &linked {
                    let Some(c) = h.community_of(level, id) else { continue };
                    if let Some(s) = h.summary(level, c) {
                        if !s.is_empty() && seen.insert(s.to_string()) {
                            summaries.push(s.to_string());
                        }
                    }
                }
            }
        }
    }
    let items: Vec<String> = triples.iter().chain(&summaries).cloned().collect();
    let taken = pack(&items, token_budget);
    let kept_triples = taken.min(triples.len());
    let kept_summaries = taken - kept_triples;
    ContextBundle {
        triples: triples[..kept_triples].to_vec(),
        summaries: summaries[..kept_summaries].to_vec(),
        passages: Vec::new(),
        token_budget,
        rendered: items[..taken].join("\n"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::tests::triple;
    use crate::kg::{Curation, Entity, EntityType, Hierarchy};

    fn graph() -> KnowledgeGraph {
        let c = Curation::from_tables("rainfall\tprecipitation\n", "").unwrap();
        let mut g = KnowledgeGraph::default();
        let names = ["precipitation", "rain gauge", "tipping bucket", "flood", "wind"];
        g.merge(
            names.iter().map(|n| Entity::from_surface(n, EntityType::Other, n, &c)).collect(),
            vec![
                triple("precipitation", "measured_by", "rain_gauge", "c"),
                triple("tipping_bucket", "is_a", "rain_gauge", "c"),
                triple("precipitation", "causes", "flood", "c"),
            ],
        );
        g.apply_curation(&c);
        let level: BTreeMap<String, usize> = g.entities.keys().map(|id| (id.clone(), usize::from(id == "wind"))).collect();
        g.hierarchy = Some(Hierarchy {
            levels: vec![level],
            summaries: [((0, 0), "rain things".to_string()), ((0, 1), "wind things".to_string())].into(),
            quality_trace: vec![],
        });
        g
    }

    #[test]
    fn linking_prefers_longest_alias() {
        let g = graph();
        assert_eq!(link_entities(&g, "How much Rainfall fell in the rain gauges?"), vec!["precipitation", "rain_gauge"]);
        assert!(link_entities(&g, "nothing here").is_empty());
    }

    #[test]
    fn bfs_respects_hops() {
        let g = graph();
        let one: Vec<_> = bfs_triples(&g, &["precipitation".into()], 1).iter().map(|t| render_triple(t)).collect();
        assert_eq!(one, vec!["precipitation causes flood", "precipitation measured_by rain_gauge"]);
        let two = bfs_triples(&g, &["precipitation".into()], 2);
        assert_eq!(two.len(), 3);
        assert!(bfs_triples(&g, &["precipitation".into()], 0).is_empty());
    }

    #[test]
    fn bundle_contains_summaries_and_falls_back() {
        let g = graph();
        let b = retrieve_context(&g, "rainfall", 2, 100);
        assert_eq!(b.triples.len(), 3);
        assert_eq!(b.summaries, vec!["rain things"]);
        let fallback = retrieve_context(&g, "unrelated query", 2, 100);
        assert!(fallback.triples.is_empty());
        assert_eq!(fallback.summaries, vec!["rain things", "wind things"]);
    }

    #[test]
    fn budget_is_respected() {
        let g = graph();
        assert_eq!(retrieve_context(&g, "rainfall", 2, 0).rendered, "");
        let b = retrieve_context(&g, "rainfall", 2, 7);
        assert_eq!(b.triples.len(), 2);
        assert!(token_count(&b.rendered) <= 7);
    }
}
