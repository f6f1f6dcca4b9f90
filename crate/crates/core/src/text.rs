//! Tokenization and name normalization shared by every module.
//!
//! Tokens are whitespace-delimited words everywhere (chunking, budgets,
//! context rendering). Names are normalized by lowercasing and replacing
//! punctuation with spaces, so `"24-hour Rainfall"` and `"24 hour rainfall"`
//! compare equal.

/// Whitespace tokens of `text`.
pub fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercases, maps every non-alphanumeric character to a space and
/// collapses runs of whitespace.
pub fn normalize_name(text: &str) -> String {
    let mapped: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identifier form of a name: normalized words joined by `_`.
pub fn slug(text: &str) -> String {
    normalize_name(text).replace(' ', "_")
}

/// Normalizes a relation predicate to `snake_case`.
pub fn normalize_predicate(text: &str) -> String {
    slug(text)
}

/// Light suffix stemmer used for keyword matching. A trailing `e` is dropped
/// after suffix stripping so `measure`, `measured` and `measures` agree.
pub fn stem(word: &str) -> String {
    let mut w = word.to_lowercase();
    for suffix in ["ations", "ation", "ings", "ing", "ies", "ed", "s"] {
        if w.len() > suffix.len() + 3 && w.ends_with(suffix) {
            let base = &w[..w.len() - suffix.len()];
            w = match suffix {
                "ies" => format!("{base}y"),
                "ations" | "ation" => format!("{base}ate"),
                _ => base.to_string(),
            };
            break;
        }
    }
    if w.len() > 4 && w.ends_with('e') {
        w.pop();
    }
    w
}

/// Stems of the normalized words of `text`, in order.
pub fn stems(text: &str) -> Vec<String> {
    normalize_name(text).split(' ').filter(|w| !w.is_empty()).map(stem).collect()
}

/// True when the stemmed word sequence of `needle` occurs contiguously in
/// `haystack`.
pub fn contains_stem_sequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// First `budget` whitespace tokens of `text`, re-joined with single spaces.
pub fn truncate_tokens(text: &str, budget: usize) -> String {
    text.split_whitespace().take(budget).collect::<Vec<_>>().join(" ")
}
