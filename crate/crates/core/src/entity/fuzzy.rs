//! Embedding fallback for questions with no exact dictionary hit.

use std::cmp::Ordering;

use crate::embeddings::{token_spans, EmbeddingTable};
use crate::numeric::Vector;

use super::{EntityMatch, MatchedVia, MedicalDictionary};

/// Function words skipped when picking query tokens to compare.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "am", "an", "and", "any", "are", "as", "at", "be", "been", "being", "but", "by", "can", "could",
    "did", "do", "does", "doing", "for", "from", "get", "gets", "give", "had", "has", "have", "having", "he", "her",
    "him", "his", "how", "i", "i'm", "if", "in", "into", "is", "it", "it's", "its", "me", "my", "of", "on", "or",
    "our", "she", "should", "so", "some", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "to", "up", "us", "was", "we", "were", "what", "when", "where", "which", "while", "who", "why",
    "will", "with", "would", "you", "your",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mean_vector(table: &EmbeddingTable, words: &[String]) -> Vector {
    let mut acc = Vector::zeros(table.dim());
    for w in words {
        acc.axpy(1.0, &table.lookup(w));
    }
    if !words.is_empty() {
        let n = words.len() as f64;
        acc.0.iter_mut().for_each(|v| *v /= n);
    }
    acc
}

/// Dictionary terms with precomputed mean vectors.
#[derive(Debug, Clone)]
pub struct FuzzyIndex {
    terms: Vec<(String, Vector)>,
}

/// A fuzzy candidate before role expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyHit {
    pub term: String,
    pub score: f64,
    pub start: usize,
    pub end: usize,
}

impl FuzzyIndex {
    pub fn new(table: &EmbeddingTable, dict: &MedicalDictionary) -> Self {
        let terms = dict
            .terms()
            .into_iter()
            .map(|t| {
                let words: Vec<String> = token_spans(&t).into_iter().map(|s| s.token).collect();
                let v = mean_vector(table, &words);
                (t, v)
            })
            .collect();
        FuzzyIndex { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Top `k` terms by best cosine against any content token of `text`.
    pub fn search(&self, table: &EmbeddingTable, text: &str, k: usize) -> Vec<FuzzyHit> {
        let tokens: Vec<_> = token_spans(text)
            .into_iter()
            .filter(|s| !is_stopword(&s.token))
            .map(|s| {
                let v = table.lookup(&s.token);
                (s, v)
            })
            .collect();
        if tokens.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut hits: Vec<FuzzyHit> = self
            .terms
            .iter()
            .map(|(term, tv)| {
                let mut best = (f64::NEG_INFINITY, 0);
                for (i, (_, qv)) in tokens.iter().enumerate() {
                    let c = cosine(tv, qv);
                    if c > best.0 {
                        best = (c, i);
                    }
                }
                let span = &tokens[best.1].0;
                FuzzyHit {
                    term: term.clone(),
                    score: best.0,
                    start: span.start,
                    end: span.end,
                }
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.term.cmp(&b.term))
        });
        hits.truncate(k);
        hits
    }
}

/// Top-`k` dictionary terms closest to some content token of `text`, each
/// reported with that token's span and `matched_via = fuzzy`.
pub fn fuzzy_entities(table: &EmbeddingTable, dict: &MedicalDictionary, text: &str, k: usize) -> Vec<EntityMatch> {
    let index = FuzzyIndex::new(table, dict);
    expand_roles(dict, index.search(table, text, k))
}

pub(crate) fn expand_roles(dict: &MedicalDictionary, hits: Vec<FuzzyHit>) -> Vec<EntityMatch> {
    hits.into_iter()
        .flat_map(|h| {
            dict.roles(&h.term).into_iter().map(move |role| EntityMatch {
                term: h.term.clone(),
                role,
                start: h.start,
                end: h.end,
                matched_via: MatchedVia::Fuzzy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityRole;

    fn toy() -> (EmbeddingTable, MedicalDictionary) {
        let mut t = EmbeddingTable::new(3, 0);
        for (w, v) in [
            ("cold", [1.0, 0.0, 0.0]),
            ("flu", [0.9, 0.1, 0.0]),
            ("fever", [0.0, 1.0, 0.0]),
            ("cough", [0.0, 0.7, 0.7]),
            ("asthma", [0.0, 0.0, 1.0]),
            ("chill", [0.95, 0.05, 0.0]),
        ] {
            t.insert(w, v.to_vec().into()).unwrap();
        }
        let d = MedicalDictionary::new(["cold", "flu", "asthma"], ["fever", "cough"]);
        (t, d)
    }

    #[test]
    fn stopwords_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exact_term_ranks_first() {
        let (t, d) = toy();
        let text = "what about my cold";
        let m = fuzzy_entities(&t, &d, text, 1);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].term, "cold");
        assert_eq!(m[0].matched_via, MatchedVia::Fuzzy);
        assert_eq!(&text[m[0].start..m[0].end], "cold");
    }

    #[test]
    fn k_is_clamped() {
        let (t, d) = toy();
        let m = fuzzy_entities(&t, &d, "chill", 50);
        assert_eq!(m.len(), 5);
        assert_eq!(m[0].term, "cold");
        assert_eq!(m[1].term, "flu");
    }

    #[test]
    fn matches_exhaustive_cosine_ranking() {
        let (t, d) = toy();
        let q = t.lookup("chill");
        let mut oracle: Vec<(f64, String)> = d
            .terms()
            .into_iter()
            .map(|term| (cosine(&t.lookup(&term), &q), term))
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let got: Vec<String> = fuzzy_entities(&t, &d, "chill", 5).into_iter().map(|m| m.term).collect();
        let want: Vec<String> = oracle.into_iter().map(|(_, t)| t).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn ties_break_lexicographically() {
        let mut t = EmbeddingTable::new(2, 0);
        t.insert("zeta", vec![1.0, 0.0].into()).unwrap();
        t.insert("alpha", vec![2.0, 0.0].into()).unwrap();
        t.insert("q", vec![1.0, 0.0].into()).unwrap();
        let d = MedicalDictionary::new(["zeta", "alpha"], Vec::<&str>::new());
        let m = fuzzy_entities(&t, &d, "q", 2);
        assert_eq!(m[0].term, "alpha");
        assert_eq!(m[1].term, "zeta");
    }

    #[test]
    fn no_content_tokens() {
        let (t, d) = toy();
        assert!(fuzzy_entities(&t, &d, "what is the", 3).is_empty());
        assert!(fuzzy_entities(&t, &d, "?!", 3).is_empty());
    }

    #[test]
    fn multiword_term_uses_mean() {
        let (mut t, _) = toy();
        t.insert("chest", vec![0.0, 0.0, 1.0].into()).unwrap();
        let d = MedicalDictionary::new(Vec::<&str>::new(), ["chest cough"]);
        let m = fuzzy_entities(&t, &d, "asthma", 1);
        assert_eq!(m[0].role, EntityRole::Symptom);
        let idx = FuzzyIndex::new(&t, &d);
        let h = idx.search(&t, "asthma", 1);
        let mean = [0.0, 0.35, 0.85];
        assert!((h[0].score - cosine(&mean, &[0.0, 0.0, 1.0])).abs() < 1e-12);
    }
}
