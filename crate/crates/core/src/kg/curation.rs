//! Static expert curation: an alias table mapping surface variants to
//! canonical entity names, and a predicate synonym table.
//!
//! Both files are `variant<TAB>canonical`. In the synonym table a canonical
//! prefixed with `~` denotes the inverse relation, so `measures ~measured_by`
//! turns `(a, measures, b)` into `(b, measured_by, a)`.

use std::collections::BTreeMap;
use std::path::Path;

use super::KgError;
use crate::text::{normalize_name, normalize_predicate};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curation {
    aliases: BTreeMap<String, String>,
    synonyms: BTreeMap<String, (String, bool)>,
}

fn parse_tsv(text: &str, what: &str) -> Result<Vec<(String, String)>, KgError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                rows.push((a.trim().to_string(), b.trim().to_string()))
            }
            _ => return Err(KgError::Curation(format!("{what} line {}: expected variant<TAB>canonical", i + 1))),
        }
    }
    Ok(rows)
}

impl Curation {
    pub fn from_tables(aliases_tsv: &str, synonyms_tsv: &str) -> Result<Self, KgError> {
        let mut curation = Curation::default();
        for (variant, canonical) in parse_tsv(aliases_tsv, "alias table")? {
            curation.add_alias(&variant, &canonical);
        }
        for (variant, canonical) in parse_tsv(synonyms_tsv, "synonym table")? {
            let (canonical, inverted) = match canonical.strip_prefix('~') {
                Some(rest) => (rest, true),
                None => (canonical.as_str(), false),
            };
            curation.add_synonym(&variant, canonical, inverted);
        }
        Ok(curation)
    }

    pub fn load(aliases: impl AsRef<Path>, synonyms: impl AsRef<Path>) -> Result<Self, KgError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| KgError::Io(format!("{}: {e}", p.display())));
        Self::from_tables(&read(aliases.as_ref())?, &read(synonyms.as_ref())?)
    }

    pub fn add_alias(&mut self, variant: &str, canonical: &str) {
        let (v, c) = (normalize_name(variant), normalize_name(canonical));
        if !v.is_empty() && v != c {
            self.aliases.insert(v, c);
        }
    }

    pub fn add_synonym(&mut self, variant: &str, canonical: &str, inverted: bool) {
        let (v, c) = (normalize_predicate(variant), normalize_predicate(canonical));
        if v != c || inverted {
            self.synonyms.insert(v, (c, inverted));
        }
    }

    /// Normalized canonical name for `name`, following alias chains.
    pub fn resolve_name(&self, name: &str) -> String {
        let mut current = normalize_name(name);
        for _ in 0..=self.aliases.len() {
            match self.aliases.get(&current) {
                Some(next) => current = next.clone(),
                None => break,
            }
        }
        current
    }

    /// Canonical predicate and whether subject and object must be swapped.
    pub fn canonical_predicate(&self, predicate: &str) -> (String, bool) {
        let mut current = normalize_predicate(predicate);
        let mut inverted = false;
        for _ in 0..=self.synonyms.len() {
            match self.synonyms.get(&current) {
                Some((next, inv)) if next != &current || *inv => {
                    inverted ^= inv;
                    if next == &current {
                        break;
                    }
                    current = next.clone();
                }
                _ => break,
            }
        }
        (current, inverted)
    }

    /// Alias variants whose resolution is `canonical` (normalized).
    pub fn variants_of(&self, canonical: &str) -> Vec<String> {
        self.aliases.keys().filter(|v| self.resolve_name(v) == canonical).cloned().collect()
    }

    pub fn aliases(&self) -> impl Iterator<Item = (&String, &String)> {
        self.aliases.iter()
    }

    pub fn alias_count(&self) -> usize {
        self.aliases.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_resolve_through_chains() {
        let c = Curation::from_tables("Rain Gauges\train gauge\ntemp\ttemperature\nT\ttemp\n", "").unwrap();
        assert_eq!(c.resolve_name("rain gauges"), "rain gauge");
        assert_eq!(c.resolve_name("T"), "temperature");
        assert_eq!(c.resolve_name("Humidity"), "humidity");
        assert_eq!(c.variants_of("temperature"), vec!["t", "temp"]);
    }

    #[test]
    fn inverted_synonyms_compose() {
        let c = Curation::from_tables("", "is_measured_by\tmeasured_by\nmeasures\t~measured_by\nrecords\tmeasures\n").unwrap();
        assert_eq!(c.canonical_predicate("is measured by"), ("measured_by".into(), false));
        assert_eq!(c.canonical_predicate("measures"), ("measured_by".into(), true));
        assert_eq!(c.canonical_predicate("records"), ("measured_by".into(), true));
        assert_eq!(c.canonical_predicate("measured_by"), ("measured_by".into(), false));
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(Curation::from_tables("only-one-column\n", "").is_err());
    }
}
