//! Deterministic scripted stand-ins for the language model.
//!
//! They answer the same prompts a live model would, which lets fixtures be
//! recorded offline and lets tests drive every pipeline stage end to end.
//! [`ScriptedLlm`] routes each request to the right script by its system
//! prompt.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde_json::Value;

use crate::canonical::{canonical_json, canonical_number};
use crate::eval::pairs::PAIR_SYSTEM_PROMPT;
use crate::eval::{observed_value, InstructionCase, Style};
use crate::gateway::{ChatBackend, CompletionRequest, GatewayError, Role};
use crate::kg::extract::{EXTRACTION_SYSTEM_PROMPT, NO_RECORDS, PASSAGE_MARKER};
use crate::kg::summarize::SUMMARY_SYSTEM_PROMPT;
use crate::kg::Curation;
use crate::text::{normalize_name, stems};

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const MAX_PREDICATE_WORDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub name: String,
    pub entity_type: String,
    pub description: String,
}

pub fn parse_lexicon(tsv: &str) -> Result<Vec<LexiconEntry>, String> {
    tsv.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
            match cols.as_slice() {
                [name, ty, desc] if !name.is_empty() => {
                    Ok(LexiconEntry { name: name.to_string(), entity_type: ty.to_string(), description: desc.to_string() })
                }
                _ => Err(format!("lexicon line {}: expected name, type, description", i + 1)),
            }
        })
        .collect()
}

/// Finds lexicon terms and their curated aliases in each sentence and
/// relates consecutive mentions by the words between them.
pub struct LexiconExtractor {
    /// Stemmed surface form to (surface to emit, lexicon entry index).
    index: HashMap<Vec<String>, (String, usize)>,
    lexicon: Vec<LexiconEntry>,
    max_len: usize,
}

struct Mention {
    start: usize,
    end: usize,
    surface: String,
    entry: usize,
}

impl LexiconExtractor {
    pub fn new(lexicon: Vec<LexiconEntry>, curation: &Curation) -> Self {
        let mut index = HashMap::new();
        let by_name: HashMap<String, usize> = lexicon.iter().enumerate().map(|(i, e)| (normalize_name(&e.name), i)).collect();
        for (i, e) in lexicon.iter().enumerate() {
            index.insert(stems(&e.name), (e.name.clone(), i));
        }
        for (variant, canonical) in curation.aliases() {
            if let Some(&i) = by_name.get(&normalize_name(&curation.resolve_name(canonical))) {
                index.entry(stems(variant)).or_insert_with(|| (variant.clone(), i));
            }
        }
        let max_len = index.keys().map(Vec::len).max().unwrap_or(0);
        Self { index, lexicon, max_len }
    }

    fn mentions(&self, words: &[String]) -> Vec<Mention> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let hit = (1..=self.max_len.min(words.len() - i))
                .rev()
                .find_map(|len| self.index.get(&words[i..i + len]).map(|h| (len, h)));
            match hit {
                Some((len, (surface, entry))) => {
                    out.push(Mention { start: i, end: i + len, surface: surface.clone(), entry: *entry });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    pub fn extract(&self, passage: &str) -> String {
        let mut entities: BTreeMap<String, usize> = BTreeMap::new();
        let mut order = Vec::new();
        let mut relations = Vec::new();
        for sentence in sentences(passage) {
            let normalized = normalize_name(sentence);
            let plain: Vec<&str> = normalized.split(' ').filter(|w| !w.is_empty()).collect();
            let words: Vec<String> = plain.iter().map(|w| crate::text::stem(w)).collect();
            let mentions = self.mentions(&words);
            for m in &mentions {
                if !entities.contains_key(&m.surface) {
                    entities.insert(m.surface.clone(), m.entry);
                    order.push(m.surface.clone());
                }
            }
            for pair in mentions.windows(2) {
                let between: Vec<&str> = plain[pair[0].end..pair[1].start]
                    .iter()
                    .copied()
                    .filter(|w| !ARTICLES.contains(w))
                    .collect();
                if between.is_empty() || between.len() > MAX_PREDICATE_WORDS || pair[0].entry == pair[1].entry {
                    continue;
                }
                relations.push(format!("REL\t{}\t{}\t{}\t0.9", pair[0].surface, between.join(" "), pair[1].surface));
            }
        }
        if order.is_empty() {
            return NO_RECORDS.to_string();
        }
        let mut lines: Vec<String> = order
            .iter()
            .map(|s| {
                let e = &self.lexicon[entities[s]];
                format!("ENTITY\t{s}\t{}\t{}", e.entity_type, e.description)
            })
            .collect();
        lines.extend(relations);
        lines.join("\n")
    }
}

/// Sentences end at `.`, `?` or `!` followed by whitespace or the end.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let boundary = matches!(c, '.' | '?' | '!') && chars.get(k + 1).is_none_or(|(_, n)| n.is_whitespace());
        if boundary {
            out.push(&text[start..i]);
            start = i + c.len_utf8();
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Summarizes a community from the entity and relation lines of the prompt.
pub struct TemplateSummarizer;

impl TemplateSummarizer {
    pub fn summarize(&self, prompt: &str) -> String {
        let mut entities = Vec::new();
        let mut relations = Vec::new();
        let mut section = "";
        for line in prompt.lines() {
            match line {
                "Entities:" | "Relations:" => section = line,
                l if l.starts_with("- ") => {
                    let item = &l[2..];
                    if section == "Entities:" {
                        entities.push(item.split(" (").next().unwrap_or(item).to_string());
                    } else {
                        relations.push(item.to_string());
                    }
                }
                _ => {}
            }
        }
        let shown = entities.iter().take(8).cloned().collect::<Vec<_>>().join(", ");
        let more = if entities.len() > 8 { format!(" and {} more", entities.len() - 8) } else { String::new() };
        let mut text = format!("This community groups {} entities: {shown}{more}.", entities.len());
        if !relations.is_empty() {
            text.push_str(&format!(" Key relations: {}.", relations.iter().take(4).cloned().collect::<Vec<_>>().join("; ")));
        }
        text
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => canonical_number(n),
        other => canonical_json(other),
    }
}

/// Answers each known case with its gold call, then quotes every answer
/// field from the observation.
pub struct GoldAgent {
    cases: HashMap<String, InstructionCase>,
}

impl GoldAgent {
    pub fn new(cases: &[InstructionCase]) -> Self {
        Self { cases: cases.iter().map(|c| (c.instruction.clone(), c.clone())).collect() }
    }

    pub fn respond(&self, prompt: &str) -> String {
        let Some((question, scratchpad)) = split_question(prompt) else {
            return "Thought: there is no question to answer\nFinal Answer: Please ask a question.".into();
        };
        let Some(case) = self.cases.get(question) else {
            return "Thought: none of the tools fits this question\nFinal Answer: I cannot answer this question with the available tools.".into();
        };
        let last_observation = scratchpad.lines().rev().find_map(|l| l.strip_prefix("Observation:")).map(str::trim);
        match last_observation {
            None => {
                let tags: Vec<&str> = case.intent_tags.iter().map(String::as_str).collect();
                format!(
                    "Thought: The question asks for {} data, which {} provides.\nAction: {}\nAction Input: {}",
                    tags.join(" and "),
                    case.gold_tool,
                    case.gold_tool,
                    canonical_json(&Value::Object(case.gold_params.clone()))
                )
            }
            Some(obs) => match serde_json::from_str::<Value>(obs).ok().filter(Value::is_object) {
                Some(v) => {
                    let parts: Vec<String> = case
                        .answer_fields
                        .iter()
                        .map(|f| match observed_value(&v, f) {
                            Some(x) => format!("{} is {}", f.replace('.', " "), render_value(x)),
                            None => format!("{f} is unavailable"),
                        })
                        .collect();
                    format!("Thought: I now know the answer\nFinal Answer: {}.", parts.join("; "))
                }
                None => "Thought: the tool call failed\nFinal Answer: The requested data could not be retrieved.".into(),
            },
        }
    }
}

/// The question line and everything after it.
fn split_question(prompt: &str) -> Option<(&str, &str)> {
    let start = prompt.rfind("\nQuestion: ").map(|i| i + 1).or_else(|| prompt.starts_with("Question: ").then_some(0))?;
    let rest = &prompt[start + "Question: ".len()..];
    let (question, scratchpad) = rest.split_once('\n').unwrap_or((rest, ""));
    Some((question.trim(), scratchpad))
}

/// Writes the shipped case for each (api, style) request.
pub struct PairAuthor {
    cases: HashMap<(String, Style), InstructionCase>,
}

impl PairAuthor {
    pub fn new(cases: &[InstructionCase]) -> Self {
        Self { cases: cases.iter().map(|c| ((c.gold_tool.clone(), c.style), c.clone())).collect() }
    }

    pub fn respond(&self, prompt: &str) -> Result<String, GatewayError> {
        let field = |label: &str| prompt.lines().find_map(|l| l.strip_prefix(label)).map(str::trim);
        let api = field("API:").ok_or_else(|| GatewayError::Backend("pair prompt without API line".into()))?;
        let style = match field("Style:") {
            Some("implicit") => Style::Implicit,
            _ => Style::Explicit,
        };
        let case = self
            .cases
            .get(&(api.to_string(), style))
            .ok_or_else(|| GatewayError::Backend(format!("no scripted {} pair for {api}", style.as_str())))?;
        Ok(format!(
            "Instruction: {}\nParameters: {}",
            case.instruction,
            canonical_json(&Value::Object(case.gold_params.clone()))
        ))
    }
}

/// Routes requests to the scripts by system prompt.
#[derive(Default)]
pub struct ScriptedLlm {
    pub extractor: Option<LexiconExtractor>,
    pub agent: Option<GoldAgent>,
    pub author: Option<PairAuthor>,
}

impl ScriptedLlm {
    /// Loads `kg/lexicon.tsv`, the curation tables and `cases.jsonl` from a
    /// data directory.
    pub fn from_data_dir(dir: impl AsRef<Path>) -> Result<Self, String> {
        let dir = dir.as_ref();
        let read = |p: &str| std::fs::read_to_string(dir.join(p)).map_err(|e| format!("{}: {e}", dir.join(p).display()));
        let curation = Curation::from_tables(&read("kg/aliases.tsv")?, &read("kg/synonyms.tsv")?).map_err(|e| e.to_string())?;
        let lexicon = parse_lexicon(&read("kg/lexicon.tsv")?)?;
        let cases: Vec<InstructionCase> = read("cases.jsonl")?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| format!("cases.jsonl: {e}"))?;
        Ok(Self {
            extractor: Some(LexiconExtractor::new(lexicon, &curation)),
            agent: Some(GoldAgent::new(&cases)),
            author: Some(PairAuthor::new(&cases)),
        })
    }
}

impl ChatBackend for ScriptedLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let system = request.messages.iter().find(|m| m.role == Role::System).map(|m| m.content.as_str()).unwrap_or("");
        let user = request.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("");
        let missing = |what: &str| GatewayError::Backend(format!("no scripted {what}"));
        if system == EXTRACTION_SYSTEM_PROMPT {
            let passage = user.strip_prefix(PASSAGE_MARKER).unwrap_or(user);
            Ok(self.extractor.as_ref().ok_or_else(|| missing("extractor"))?.extract(passage))
        } else if system == SUMMARY_SYSTEM_PROMPT {
            Ok(TemplateSummarizer.summarize(user))
        } else if system == PAIR_SYSTEM_PROMPT {
            self.author.as_ref().ok_or_else(|| missing("pair author"))?.respond(user)
        } else {
            Ok(self.agent.as_ref().ok_or_else(|| missing("agent"))?.respond(system))
        }
    }
}
