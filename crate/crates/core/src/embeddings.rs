//! Tokenization and frozen word-vector lookup.
//!
//! Vectors are read from a plain-text file, one `word v1 .. v_dim` per line
//! with an optional `count dim` header. Out-of-vocabulary words get a
//! pseudo-random vector derived from the word and the table's `oov_seed`, so
//! the same unknown word always embeds identically.

use std::collections::HashMap;
use std::io::{BufRead, Read};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::Vector;

/// Half-width of the uniform range OOV components are drawn from.
pub const OOV_RANGE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source_text: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub(crate) fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// A token with its byte range in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// Split on anything that is not a letter, digit or apostrophe, lowercasing
/// each fragment and keeping its byte range in `text`.
pub fn token_spans(text: &str) -> Vec<TokenSpan> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (start, is_token_char(c) && i < text.len()) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                out.push(TokenSpan {
                    token: text[s..i].to_lowercase(),
                    start: s,
                    end: i,
                });
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Lowercased tokens of `text`.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence {
        tokens: token_spans(text).into_iter().map(|t| t.token).collect(),
        source_text: text.to_owned(),
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vector>,
    oov_seed: u64,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_seed: u64) -> Self {
        EmbeddingTable {
            dim,
            entries: HashMap::new(),
            oov_seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn with_oov_seed(mut self, seed: u64) -> Self {
        self.oov_seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Inserts `word` unless it is already present. Returns whether it was added.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vector) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding has length {} but table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if !vector.is_finite() {
            return Err(Error::NonFinite("embedding vector".into()));
        }
        let word = word.into();
        if self.entries.contains_key(&word) {
            return Ok(false);
        }
        self.entries.insert(word, vector);
        Ok(true)
    }

    pub fn get(&self, word: &str) -> Option<&Vector> {
        self.entries.get(word)
    }

    /// Stored vector, or the deterministic OOV vector for unknown words.
    pub fn lookup(&self, word: &str) -> Vector {
        match self.entries.get(word) {
            Some(v) => v.clone(),
            None => self.oov_vector(word),
        }
    }

    fn oov_vector(&self, word: &str) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()) ^ self.oov_seed.rotate_left(17));
        (0..self.dim)
            .map(|_| rng.random_range(-OOV_RANGE..=OOV_RANGE))
            .collect::<Vec<_>>()
            .into()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Parse a plain-text vector file. Duplicate words keep their first vector.
pub fn load_vectors<R: BufRead>(source: R, expected_dim: usize) -> Result<EmbeddingTable> {
    if expected_dim == 0 {
        return Err(Error::InvalidArgument("embedding dim must be at least 1".into()));
    }
    let mut table = EmbeddingTable::new(expected_dim, 0);
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        if line_no == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(dim)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                if dim != expected_dim {
                    return Err(Error::parse(
                        line_no,
                        format!("header declares dim {dim}, expected {expected_dim}"),
                    ));
                }
                continue;
            }
        }
        if rest.len() != expected_dim {
            return Err(Error::parse(
                line_no,
                format!("expected {expected_dim} components, found {}", rest.len()),
            ));
        }
        let values = rest
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("non-numeric component {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        table.insert(word, values.into())?;
    }
    Ok(table)
}

/// Like [`load_vectors`], taking the dim from the header or, without one,
/// from the first entry.
pub fn load_vectors_infer_dim<R: BufRead>(mut source: R) -> Result<EmbeddingTable> {
    let mut first = String::new();
    source.read_line(&mut first)?;
    let fields: Vec<&str> = first.trim_end_matches(['\n', '\r']).split(' ').collect();
    let dim = match fields.as_slice() {
        [count, dim] if count.parse::<usize>().is_ok() => dim
            .parse::<usize>()
            .map_err(|_| Error::parse(1, format!("bad header dim {dim:?}")))?,
        [_, rest @ ..] if !rest.is_empty() => rest.len(),
        _ => return Err(Error::parse(1, "cannot infer the vector dimension")),
    };
    load_vectors(std::io::Cursor::new(first).chain(source), dim)
}

/// Fixed-length embedded sequence: truncated to the first `max_len` tokens,
/// right-padded with zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSequence {
    pub vectors: Vec<Vector>,
    pub mask: Vec<bool>,
}

impl EmbeddedSequence {
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

pub fn embed_sequence(table: &EmbeddingTable, seq: &TokenSequence, max_len: usize) -> EmbeddedSequence {
    let max_len = max_len.max(1);
    let mut vectors = Vec::with_capacity(max_len);
    let mut mask = Vec::with_capacity(max_len);
    for token in seq.tokens.iter().take(max_len) {
        vectors.push(table.lookup(token));
        mask.push(true);
    }
    while vectors.len() < max_len {
        vectors.push(Vector::zeros(table.dim()));
        mask.push(false);
    }
    EmbeddedSequence { vectors, mask }
}
