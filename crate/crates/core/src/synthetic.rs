//! Deterministic toy duplicate-question corpus.
//!
//! Duplicates ask the same thing about the same disease with synonyms
//! substituted; non-duplicates pair questions about different diseases. The
//! companion vector table places synonyms near a shared base vector, playing
//! the role pretrained embeddings play on real data.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{tokenize, EmbeddingTable};
use crate::trainer::LabeledPair;

pub const TOY_DISEASES: &[&str] = &[
    "cold", "flu", "asthma", "diabetes", "migraine", "allergy", "arthritis", "insomnia", "acne", "anemia",
];

const SYNONYMS: &[&[&str]] = &[
    &["treat", "cure", "heal", "fix"],
    &["symptoms", "signs", "indications"],
    &["causes", "triggers", "produces"],
    &["prevent", "avoid", "stop"],
    &["best", "right", "good"],
    &["way", "method", "approach"],
];

/// (template, synonym group filling `{v}`) per intent; `{d}` is the disease.
const INTENTS: &[&[(&str, usize)]] = &[
    &[
        ("how do you {v} {d}", 0),
        ("what is the best way to {v} {d}", 0),
        ("how can i {v} my {d}", 0),
    ],
    &[
        ("what are the {v} of {d}", 1),
        ("which {v} show {d}", 1),
        ("how do i know the {v} of {d}", 1),
    ],
    &[("what {v} {d}", 2), ("what usually {v} {d} in adults", 2)],
    &[("how can i {v} {d}", 3), ("what helps to {v} {d}", 3)],
];

fn question(rng: &mut ChaCha8Rng, intent: usize, disease: &str) -> String {
    let &(template, group) = INTENTS[intent].choose(rng).expect("non-empty templates");
    let verb = SYNONYMS[group].choose(rng).expect("non-empty synonyms");
    template.replace("{v}", verb).replace("{d}", disease)
}

/// `n_duplicates` positive and `n_distinct` negative pairs, interleaved.
pub fn toy_pairs(n_duplicates: usize, n_distinct: usize, seed: u64) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_duplicates + n_distinct);
    for _ in 0..n_duplicates {
        let intent = rng.random_range(0..INTENTS.len());
        let disease = TOY_DISEASES.choose(&mut rng).unwrap();
        let a = question(&mut rng, intent, disease);
        let mut b = question(&mut rng, intent, disease);
        for _ in 0..8 {
            if b != a {
                break;
            }
            b = question(&mut rng, intent, disease);
        }
        out.push(LabeledPair { q1: a, q2: b, label: 1 });
    }
    for _ in 0..n_distinct {
        let d1 = TOY_DISEASES.choose(&mut rng).unwrap();
        let mut d2 = TOY_DISEASES.choose(&mut rng).unwrap();
        while d2 == d1 {
            d2 = TOY_DISEASES.choose(&mut rng).unwrap();
        }
        let (i1, i2) = (rng.random_range(0..INTENTS.len()), rng.random_range(0..INTENTS.len()));
        let a = question(&mut rng, i1, d1);
        let b = question(&mut rng, i2, d2);
        out.push(LabeledPair { q1: a, q2: b, label: 0 });
    }
    let mut order: Vec<usize> = (0..out.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    order.into_iter().map(|i| out[i].clone()).collect()
}

/// The 200-pair corpus (100 duplicates, 100 cross pairs).
pub fn toy_corpus(seed: u64) -> Vec<LabeledPair> {
    toy_pairs(100, 100, seed)
}

/// Every word the toy generator can emit.
pub fn toy_vocabulary() -> Vec<String> {
    let mut words: Vec<String> = TOY_DISEASES.iter().map(|s| s.to_string()).collect();
    for group in SYNONYMS {
        words.extend(group.iter().map(|s| s.to_string()));
    }
    for intent in INTENTS {
        for (template, _) in intent.iter() {
            words.extend(tokenize(template).tokens.into_iter().filter(|t| t != "v" && t != "d"));
        }
    }
    words.sort();
    words.dedup();
    words
}

/// Vectors for [`toy_vocabulary`]: synonyms cluster around a shared base,
/// diseases and filler words are independent.
pub fn toy_vectors(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |scale: f64| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-scale..scale)).collect() };
    let mut table = EmbeddingTable::new(dim, seed);
    for group in SYNONYMS {
        let base = gauss(1.0);
        for word in group.iter() {
            let noise = gauss(0.05);
            let v: Vec<f64> = base.iter().zip(&noise).map(|(b, n)| b + n).collect();
            table.insert(*word, v.into()).expect("dim matches");
        }
    }
    for word in toy_vocabulary() {
        if !table.contains(&word) {
            let v = gauss(1.0);
            table.insert(word, v.into()).expect("dim matches");
        }
    }
    table
}

/// Serialize a table in the plain-text vector format, sorted by word.
pub fn write_vectors(table: &EmbeddingTable, words: &[String], out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "{} {}", words.len(), table.dim())?;
    for w in words {
        let v = table.lookup(w);
        write!(out, "{w}")?;
        for x in v.iter() {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape() {
        let pairs = toy_corpus(1);
        assert_eq!(pairs.len(), 200);
        assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), 100);
        assert_eq!(toy_corpus(1), pairs);
        let table = toy_vectors(8, 1);
        for p in &pairs {
            for t in tokenize(&p.q1).tokens.iter().chain(&tokenize(&p.q2).tokens) {
                assert!(table.contains(t), "missing {t}");
            }
        }
    }

    #[test]
    fn vectors_round_trip_through_text_format() {
        let table = toy_vectors(4, 3);
        let words = toy_vocabulary();
        let mut buf = Vec::new();
        write_vectors(&table, &words, &mut buf).unwrap();
        let loaded = crate::embeddings::load_vectors(&buf[..], 4).unwrap();
        for w in &words {
            assert_eq!(loaded.get(w), table.get(w));
        }
    }
}
