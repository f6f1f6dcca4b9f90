//! Model-driven entity and relation extraction.
//!
//! The model answers with one record per line:
//!
//! ```text
//! ENTITY<TAB>name<TAB>type<TAB>description
//! REL<TAB>subject<TAB>predicate<TAB>object<TAB>confidence
//! ```

use std::collections::BTreeSet;

use super::{Chunk, Curation, Entity, EntityType, KgError, KnowledgeGraph, Triple};
use crate::gateway::{ChatMessage, CompletionRequest, Gateway};
use crate::text::{normalize_predicate, slug};

pub const EXTRACTION_SYSTEM_PROMPT: &str = "You extract a meteorological knowledge graph from text.
List every entity and every relation stated in the passage, one record per line, tab-separated:
ENTITY<TAB>name<TAB>type<TAB>description
REL<TAB>subject<TAB>predicate<TAB>object<TAB>confidence
Types: meteorological_element, instrument, event, dataset, api, location, other.
Predicates are short verb phrases taken from the text. Confidence is a number in [0,1].
If the passage states no entities, output NONE. Output nothing else.

Example passage:
Air temperature is measured by a thermometer.
Example output:
ENTITY\tair temperature\tmeteorological_element\tThe temperature of the air near the surface.
ENTITY\tthermometer\tinstrument\tAn instrument that measures temperature.
REL\tair temperature\tis measured by\tthermometer\t0.9";

/// The whole answer for a passage without entities.
pub const NO_RECORDS: &str = "NONE";

/// Marker preceding the passage in the user message.
pub const PASSAGE_MARKER: &str = "Passage:\n";

pub fn extraction_request(chunk: &Chunk) -> CompletionRequest {
    CompletionRequest::new(vec![
        ChatMessage::system(EXTRACTION_SYSTEM_PROMPT),
        ChatMessage::user(format!("{PASSAGE_MARKER}{}", chunk.text)),
    ])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub entities: Vec<Entity>,
    pub triples: Vec<Triple>,
}

/// Extracts entities and triples from one chunk. Relations whose endpoints
/// are neither returned nor already in `known` are dropped with a warning.
pub fn extract_graph(
    chunk: &Chunk,
    gateway: &Gateway,
    known: &KnowledgeGraph,
    curation: &Curation,
) -> Result<Extraction, KgError> {
    if chunk.text.trim().is_empty() {
        return Ok(Extraction::default());
    }
    let raw = gateway
        .complete(&extraction_request(chunk))
        .map_err(|source| KgError::Extraction { chunk: chunk.id.clone(), source })?;
    parse_extraction(&raw, chunk, known, curation)
}

pub fn parse_extraction(raw: &str, chunk: &Chunk, known: &KnowledgeGraph, curation: &Curation) -> Result<Extraction, KgError> {
    let format_error = |reason: String| KgError::ExtractionFormat { chunk: chunk.id.clone(), reason, raw: raw.to_string() };
    let mut out = Extraction::default();
    if raw.trim() == NO_RECORDS {
        return Ok(out);
    }
    let mut relations = Vec::new();
    let mut records = 0;
    for (n, line) in raw.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        match cols[0] {
            "ENTITY" if cols.len() == 4 && !cols[1].is_empty() => {
                let entity_type = cols[2].parse().unwrap_or_else(|_| {
                    log::debug!("unknown entity type {:?} in {}, using other", cols[2], chunk.id);
                    EntityType::Other
                });
                out.entities.push(Entity::from_surface(cols[1], entity_type, cols[3], curation));
            }
            "REL" if cols.len() == 5 => {
                let confidence: f64 = cols[4]
                    .parse()
                    .ok()
                    .filter(|c: &f64| (0.0..=1.0).contains(c))
                    .ok_or_else(|| format_error(format!("line {}: confidence must be a number in [0,1]", n + 1)))?;
                if cols[1].is_empty() || cols[2].is_empty() || cols[3].is_empty() {
                    return Err(format_error(format!("line {}: empty relation field", n + 1)));
                }
                relations.push((cols[1], cols[2], cols[3], confidence));
            }
            _ => return Err(format_error(format!("line {}: not an ENTITY or REL record", n + 1))),
        }
        records += 1;
    }
    if records == 0 {
        return Err(format_error("no records".into()));
    }
    let returned: BTreeSet<String> = out.entities.iter().map(|e| e.id.clone()).collect();
    for (s, p, o, confidence) in relations {
        let subject = slug(&curation.resolve_name(s));
        let object = slug(&curation.resolve_name(o));
        let exists = |id: &String| returned.contains(id) || known.entities.contains_key(id);
        if !exists(&subject) || !exists(&object) {
            log::warn!("chunk {}: dropping relation with unknown endpoint ({s}, {p}, {o})", chunk.id);
            continue;
        }
        out.triples.push(Triple {
            subject,
            predicate: normalize_predicate(p),
            object,
            weight: 1.0,
            provenance: [chunk.id.clone()].into(),
            confidence,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(text: &str) -> Chunk {
        Chunk { id: "doc#0".into(), source_doc: "doc".into(), text: text.into(), token_count: 0, span: [0, 0] }
    }

    #[test]
    fn parses_records_and_resolves_aliases() {
        let curation = Curation::from_tables("rain gauges\train gauge\n", "").unwrap();
        let raw = "ENTITY\tPrecipitation\tmeteorological_element\tWater falling from clouds.\n\
                   ENTITY\train gauges\tinstrument\tCollects rain.\n\
                   REL\tPrecipitation\tis measured by\train gauges\t0.9\n";
        let x = parse_extraction(raw, &chunk("t"), &KnowledgeGraph::default(), &curation).unwrap();
        let ids: Vec<_> = x.entities.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, vec!["precipitation", "rain_gauge"]);
        assert_eq!(x.triples.len(), 1);
        assert_eq!(x.triples[0].key(), ("precipitation".into(), "is_measured_by".into(), "rain_gauge".into()));
        assert_eq!(x.triples[0].provenance, ["doc#0".to_string()].into());
    }

    #[test]
    fn unknown_type_maps_to_other_and_dangling_relations_drop() {
        let raw = "ENTITY\tfoo\tgizmo\tx\nREL\tfoo\trelates to\tbar\t0.5";
        let x = parse_extraction(raw, &chunk("t"), &KnowledgeGraph::default(), &Curation::default()).unwrap();
        assert_eq!(x.entities[0].entity_type, EntityType::Other);
        assert!(x.triples.is_empty());
    }

    #[test]
    fn prose_is_a_format_error() {
        let err = parse_extraction("Precipitation is measured by rain gauges.", &chunk("t"), &KnowledgeGraph::default(), &Curation::default())
            .unwrap_err();
        match err {
            KgError::ExtractionFormat { raw, .. } => assert!(raw.contains("rain gauges")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn none_means_no_records() {
        let x = parse_extraction(" NONE\n", &chunk("t"), &KnowledgeGraph::default(), &Curation::default()).unwrap();
        assert_eq!(x, Extraction::default());
    }

    #[test]
    fn empty_chunk_skips_the_model() {
        let gw = Gateway::replay(Default::default());
        let x = extract_graph(&chunk("   "), &gw, &KnowledgeGraph::default(), &Curation::default()).unwrap();
        assert_eq!(x, Extraction::default());
        assert_eq!(gw.stats().misses, 0);
    }
}
