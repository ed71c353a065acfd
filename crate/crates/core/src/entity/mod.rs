//! Question analysis: dictionary entity extraction, embedding-based fuzzy
//! fallback, and rule-based intent recognition.
//!
//! Raw automaton hits are only accepted when they sit on token boundaries,
//! so "cold" is found in "a cold?" but not in "scolded". Overlapping
//! survivors are resolved longest first, then leftmost.

mod automaton;
mod dictionary;
mod fuzzy;
mod intent;

pub use automaton::{naive_scan, PatternAutomaton, RawMatch};
pub use dictionary::{EntityRole, MedicalDictionary};
pub use fuzzy::{cosine, fuzzy_entities, FuzzyHit, FuzzyIndex, STOPWORDS};
pub(crate) use fuzzy::expand_roles;
pub use intent::{classify_intent, IntentKind, IntentRules};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedVia {
    Exact,
    Fuzzy,
}

/// A dictionary term found in a question, with its byte span in the
/// original text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMatch {
    pub term: String,
    pub role: EntityRole,
    pub start: usize,
    pub end: usize,
    pub matched_via: MatchedVia,
}

/// Lowercased copy of a text with a byte map back to the original.
pub(crate) struct LoweredText {
    pub text: String,
    orig_start: Vec<usize>,
    orig_end: Vec<usize>,
}

impl LoweredText {
    pub fn new(original: &str) -> Self {
        let mut text = String::with_capacity(original.len());
        let mut orig_start = Vec::with_capacity(original.len());
        let mut orig_end = Vec::with_capacity(original.len());
        for (i, c) in original.char_indices() {
            let end = i + c.len_utf8();
            for lc in c.to_lowercase() {
                text.push(lc);
                for _ in 0..lc.len_utf8() {
                    orig_start.push(i);
                    orig_end.push(end);
                }
            }
        }
        LoweredText {
            text,
            orig_start,
            orig_end,
        }
    }

    /// Original byte range covering lowered range `start..end` (non-empty).
    pub fn original_span(&self, start: usize, end: usize) -> (usize, usize) {
        (self.orig_start[start], self.orig_end[end - 1])
    }

    /// Neither neighbour of `start..end` is a letter or digit.
    pub fn on_boundary(&self, start: usize, end: usize) -> bool {
        let before = self.text[..start].chars().next_back();
        let after = self.text[end..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    }
}

/// Boundary-aligned automaton hits in `lowered`.
pub(crate) fn boundary_hits(automaton: &PatternAutomaton, lowered: &LoweredText) -> Vec<RawMatch> {
    automaton
        .scan(lowered.text.as_bytes())
        .into_iter()
        .filter(|m| lowered.text.is_char_boundary(m.start) && lowered.on_boundary(m.start, m.end))
        .collect()
}

/// Greedy longest-then-leftmost selection of non-overlapping hits, returned
/// in text order.
pub(crate) fn resolve_overlaps(mut hits: Vec<RawMatch>) -> Vec<RawMatch> {
    hits.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(a.pattern.cmp(&b.pattern))
    });
    let mut kept: Vec<RawMatch> = Vec::new();
    for h in hits {
        if kept.iter().all(|k| h.end <= k.start || h.start >= k.end) {
            kept.push(h);
        }
    }
    kept.sort_by_key(|m| m.start);
    kept
}

/// Build an automaton over every dictionary term.
pub fn build_automaton(dict: &MedicalDictionary) -> Result<PatternAutomaton> {
    if dict.is_empty() {
        return Err(Error::EmptyInput("medical dictionary has no terms".into()));
    }
    PatternAutomaton::new(&dict.terms())
}

/// Exact dictionary matches in `text`; a term in both sets yields one match
/// per role.
pub fn extract_entities(automaton: &PatternAutomaton, dict: &MedicalDictionary, text: &str) -> Vec<EntityMatch> {
    let lowered = LoweredText::new(text);
    let mut out = Vec::new();
    for hit in resolve_overlaps(boundary_hits(automaton, &lowered)) {
        let term = automaton.pattern(hit.pattern);
        let (start, end) = lowered.original_span(hit.start, hit.end);
        for role in dict.roles(term) {
            out.push(EntityMatch {
                term: term.to_owned(),
                role,
                start,
                end,
                matched_via: MatchedVia::Exact,
            });
        }
    }
    out
}

/// Dictionary plus its automaton.
#[derive(Debug, Clone)]
pub struct EntityExtractor {
    dict: MedicalDictionary,
    automaton: PatternAutomaton,
}

impl EntityExtractor {
    pub fn new(dict: MedicalDictionary) -> Result<Self> {
        let automaton = build_automaton(&dict)?;
        Ok(EntityExtractor { dict, automaton })
    }

    pub fn dictionary(&self) -> &MedicalDictionary {
        &self.dict
    }

    pub fn automaton(&self) -> &PatternAutomaton {
        &self.automaton
    }

    pub fn extract(&self, text: &str) -> Vec<EntityMatch> {
        extract_entities(&self.automaton, &self.dict, text)
    }

    /// Whether `text` contains at least one boundary-aligned term.
    pub fn has_match(&self, text: &str) -> bool {
        let lowered = LoweredText::new(text);
        !boundary_hits(&self.automaton, &lowered).is_empty()
    }
}
