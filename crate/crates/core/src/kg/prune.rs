//! Redundancy pruning: predicates are mapped through the synonym table
//! (swapping endpoints for inverse synonyms) and edges sharing
//! `(subject, predicate, object)` collapse into one, accumulating weight.

use std::collections::BTreeMap;

use super::{Curation, KnowledgeGraph, Triple};

pub fn prune_redundant(graph: &KnowledgeGraph, curation: &Curation) -> KnowledgeGraph {
    let mut triples: BTreeMap<(String, String, String), Triple> = BTreeMap::new();
    for t in graph.triples.values() {
        let (predicate, inverted) = curation.canonical_predicate(&t.predicate);
        let (subject, object) = if inverted {
            (t.object.clone(), t.subject.clone())
        } else {
            (t.subject.clone(), t.object.clone())
        };
        let mapped = Triple { subject, predicate, object, ..t.clone() };
        match triples.get_mut(&mapped.key()) {
            Some(survivor) => {
                survivor.weight += mapped.weight;
                survivor.provenance.extend(mapped.provenance);
                survivor.confidence = survivor.confidence.max(mapped.confidence);
            }
            None => {
                triples.insert(mapped.key(), mapped);
            }
        }
    }
    let pruned = graph.triples.len() - triples.len();
    if pruned > 0 {
        log::info!("pruned {pruned} redundant edges");
    }
    KnowledgeGraph { triples, ..graph.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::tests::triple;

    fn synonyms() -> Curation {
        Curation::from_tables("", "is_measured_by\tmeasured_by\nmeasures\t~measured_by\n").unwrap()
    }

    #[test]
    fn inverse_synonyms_merge_into_one_edge() {
        let mut g = KnowledgeGraph::default();
        g.merge(vec![], vec![
            triple("precipitation", "is_measured_by", "rain_gauge", "c1"),
            triple("rain_gauge", "measures", "precipitation", "c2"),
        ]);
        assert_eq!(g.edge_count(), 2);
        let p = prune_redundant(&g, &synonyms());
        assert_eq!(p.edge_count(), 1);
        let t = p.triple("precipitation", "measured_by", "rain_gauge").unwrap();
        assert_eq!(t.weight, 2.0);
        assert_eq!(t.provenance.len(), 2);
    }

    #[test]
    fn prune_is_idempotent() {
        let mut g = KnowledgeGraph::default();
        g.merge(vec![], vec![
            triple("a", "measures", "b", "c1"),
            triple("b", "measured_by", "a", "c1"),
            triple("a", "causes", "c", "c2"),
        ]);
        let once = prune_redundant(&g, &synonyms());
        let twice = prune_redundant(&once, &synonyms());
        assert_eq!(once, twice);
        assert_eq!(once.edge_count(), 2);
    }
}
