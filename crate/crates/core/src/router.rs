//! Answer routing: the knowledge graph first, corpus retrieval on a miss.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::QaRecord;
use crate::embeddings::{tokenize, EmbeddingTable};
use crate::entity::{expand_roles, EntityExtractor, EntityMatch, EntityRole, FuzzyIndex, IntentKind, IntentRules, MedicalDictionary};
use crate::error::{Error, Result};
use crate::graph::{answer, EntityKind, KnowledgeGraph};
use crate::numeric::Vector;
use crate::similarity::{manhattan_similarity, rank_scored, SimilarityModel};

pub const REASK_MESSAGE: &str = "Sorry, I could not find an answer to that. Could you ask the question another way?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub top_k: usize,
    pub kg_enabled: bool,
    pub similarity_floor: f64,
    /// How many fuzzy entity candidates to consider.
    pub fuzzy_k: usize,
    /// Minimum cosine for a fuzzy entity candidate to be used.
    pub fuzzy_floor: f64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            top_k: 3,
            kg_enabled: true,
            similarity_floor: 0.0,
            fuzzy_k: 3,
            fuzzy_floor: 0.8,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.similarity_floor) {
            return Err(Error::InvalidArgument("similarity_floor must lie in [0, 1]".into()));
        }
        if !(-1.0..=1.0).contains(&self.fuzzy_floor) {
            return Err(Error::InvalidArgument("fuzzy_floor must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    Kg,
    Qa,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub question: String,
    pub answer: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub entities: Vec<EntityMatch>,
    pub intent: IntentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatAnswer {
    pub source: AnswerSource,
    pub text: String,
    pub alternatives: Vec<Alternative>,
    /// Raw answer payloads when the graph answered.
    pub items: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl ChatAnswer {
    /// Check the response contract for the given config.
    pub fn validate(&self, config: &RouterConfig) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if self.text.trim().is_empty() {
            return bad("answer text is empty");
        }
        match self.source {
            AnswerSource::Kg => {
                if !self.alternatives.is_empty() {
                    return bad("graph answers carry no alternatives");
                }
                if self.items.is_empty() {
                    return bad("graph answer without items");
                }
                if self.diagnostics.intent == IntentKind::Unknown || self.diagnostics.entities.is_empty() {
                    return bad("graph answer without intent and entity");
                }
            }
            AnswerSource::Qa => {
                if self.alternatives.is_empty() || self.alternatives.len() > config.top_k {
                    return bad("corpus answer needs 1..=top_k alternatives");
                }
                if self.text != self.alternatives[0].answer {
                    return bad("corpus answer text must be the best alternative");
                }
            }
            AnswerSource::None => {
                if !self.alternatives.is_empty() || !self.items.is_empty() {
                    return bad("empty answer carries payloads");
                }
            }
        }
        for w in self.alternatives.windows(2) {
            if w[0].similarity < w[1].similarity {
                return bad("alternatives not sorted by similarity");
            }
        }
        for a in &self.alternatives {
            if !(a.similarity > 0.0 && a.similarity <= 1.0) || a.similarity < config.similarity_floor {
                return bad("alternative similarity out of range");
            }
        }
        Ok(())
    }
}

/// Retrieval over QA records.
pub trait CorpusSearch: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Up to `k` records ranked by similarity (descending, ties by record order).
    fn search(&self, question: &str, k: usize) -> Result<Vec<Alternative>>;
}

/// No corpus at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyCorpus;

impl CorpusSearch for EmptyCorpus {
    fn len(&self) -> usize {
        0
    }

    fn search(&self, _: &str, _: usize) -> Result<Vec<Alternative>> {
        Ok(Vec::new())
    }
}

/// QA records with their questions pre-encoded by a similarity model.
#[derive(Debug, Clone)]
pub struct QaIndex {
    model: Arc<SimilarityModel>,
    records: Vec<QaRecord>,
    /// `None` for questions with no tokens.
    encodings: Vec<Option<Vector>>,
}

impl QaIndex {
    pub fn build(model: Arc<SimilarityModel>, records: Vec<QaRecord>) -> Result<Self> {
        let encodings = records
            .par_iter()
            .map(|r| {
                if tokenize(&r.question).is_empty() {
                    Ok(None)
                } else {
                    model.encode(&r.question).map(|e| Some(e.pooled))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QaIndex {
            model,
            records,
            encodings,
        })
    }

    pub fn records(&self) -> &[QaRecord] {
        &self.records
    }

    pub fn model(&self) -> &Arc<SimilarityModel> {
        &self.model
    }
}

impl CorpusSearch for QaIndex {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn search(&self, question: &str, k: usize) -> Result<Vec<Alternative>> {
        if tokenize(question).is_empty() {
            return Ok(Vec::new());
        }
        let q = self.model.encode(question)?.pooled;
        let scored = self
            .encodings
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_ref().map(|e| (i, manhattan_similarity(&q, e))))
            .collect();
        Ok(rank_scored(scored, k)
            .into_iter()
            .map(|(i, similarity)| Alternative {
                question: self.records[i].question.clone(),
                answer: self.records[i].answer.clone(),
                similarity,
            })
            .collect())
    }
}

/// Graph plus the extraction machinery derived from it.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    graph: KnowledgeGraph,
    dictionary: MedicalDictionary,
    extractor: Option<EntityExtractor>,
    fuzzy: Option<FuzzyIndex>,
    intents: IntentRules,
}

impl KnowledgeBase {
    /// The extraction dictionary is `extra` plus every disease and symptom
    /// name in the graph. The fuzzy index is built only when `table` is given,
    /// and `route` must then be called with the same table.
    pub fn new(
        graph: KnowledgeGraph,
        extra: &MedicalDictionary,
        table: Option<&EmbeddingTable>,
        intents: IntentRules,
    ) -> Self {
        let mut dictionary = extra.clone();
        for e in graph.entities() {
            match e.kind {
                EntityKind::Disease => dictionary.insert(EntityRole::Disease, &e.name),
                EntityKind::Symptom => dictionary.insert(EntityRole::Symptom, &e.name),
                EntityKind::Department => false,
            };
        }
        let extractor = EntityExtractor::new(dictionary.clone()).ok();
        let fuzzy = match (table, dictionary.is_empty()) {
            (Some(t), false) => Some(FuzzyIndex::new(t, &dictionary)),
            _ => None,
        };
        KnowledgeBase {
            graph,
            dictionary,
            extractor,
            fuzzy,
            intents,
        }
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn dictionary(&self) -> &MedicalDictionary {
        &self.dictionary
    }

    pub fn intents(&self) -> &IntentRules {
        &self.intents
    }

    /// Exact matches, or fuzzy candidates above the floor when there are none.
    pub fn entities(&self, question: &str, table: Option<&EmbeddingTable>, config: &RouterConfig) -> Vec<EntityMatch> {
        let exact = self.extractor.as_ref().map(|x| x.extract(question)).unwrap_or_default();
        if !exact.is_empty() {
            return exact;
        }
        match (&self.fuzzy, table) {
            (Some(index), Some(table)) if config.fuzzy_k > 0 => {
                let hits = index
                    .search(table, question, config.fuzzy_k)
                    .into_iter()
                    .filter(|h| h.score >= config.fuzzy_floor)
                    .collect();
                expand_roles(&self.dictionary, hits)
            }
            _ => Vec::new(),
        }
    }
}

/// Answer `question`: the graph when an entity and intent resolve to a
/// stored answer, otherwise the best corpus match, otherwise a request to
/// rephrase.
pub fn route(
    question: &str,
    kb: &KnowledgeBase,
    table: Option<&EmbeddingTable>,
    corpus: &dyn CorpusSearch,
    config: &RouterConfig,
) -> ChatAnswer {
    let entities = kb.entities(question, table, config);
    let intent = kb.intents.classify(question);
    let diagnostics = Diagnostics {
        entities,
        intent,
        error: None,
    };

    if config.kg_enabled && intent != IntentKind::Unknown {
        for e in diagnostics.entities.iter().filter(|e| e.role == EntityRole::Disease) {
            if let Ok(a) = answer(&kb.graph, intent, e) {
                if a.found {
                    return ChatAnswer {
                        source: AnswerSource::Kg,
                        text: a.to_string(),
                        alternatives: Vec::new(),
                        items: a.items,
                        diagnostics,
                    };
                }
            }
        }
    }

    let none = |diagnostics: Diagnostics| ChatAnswer {
        source: AnswerSource::None,
        text: REASK_MESSAGE.to_owned(),
        alternatives: Vec::new(),
        items: Vec::new(),
        diagnostics,
    };
    if corpus.is_empty() {
        return none(diagnostics);
    }
    match corpus.search(question, config.top_k) {
        Ok(mut alternatives) => {
            alternatives.retain(|a| a.similarity >= config.similarity_floor && a.similarity > 0.0);
            alternatives.truncate(config.top_k);
            match alternatives.first() {
                Some(best) => ChatAnswer {
                    source: AnswerSource::Qa,
                    text: best.answer.clone(),
                    items: Vec::new(),
                    alternatives,
                    diagnostics,
                },
                None => none(diagnostics),
            }
        }
        Err(e) => none(Diagnostics {
            error: Some(e.to_string()),
            ..diagnostics
        }),
    }
}
