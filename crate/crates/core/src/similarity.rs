//! Siamese scoring: both sentences go through the same encoder and are
//! compared with `exp(-‖s_a − s_b‖₁)`.

use std::fmt;

use crate::embeddings::{embed_sequence, tokenize, EmbeddedSequence, EmbeddingTable};
use crate::encoder::{HbamParameters, SentenceEncoding};
use crate::error::{Error, Result};
use crate::numeric::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub similarity: f64,
    pub left_encoding: SentenceEncoding,
    pub right_encoding: SentenceEncoding,
}

/// Manhattan-exponential similarity of two pooled vectors.
pub fn manhattan_similarity(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    (-d).exp()
}

fn embed_text(table: &EmbeddingTable, text: &str, max_len: usize, side: Side) -> Result<EmbeddedSequence> {
    let seq = tokenize(text);
    if seq.is_empty() {
        return Err(Error::EmptyInput(format!("{side} question has no tokens")));
    }
    Ok(embed_sequence(table, &seq, max_len))
}

pub fn encode_text(
    params: &HbamParameters,
    table: &EmbeddingTable,
    text: &str,
    max_len: usize,
) -> Result<SentenceEncoding> {
    let e = embed_text(table, text, max_len, Side::Left)?;
    params.encode(&e.vectors, &e.mask)
}

pub fn score_pair(
    params: &HbamParameters,
    table: &EmbeddingTable,
    q1: &str,
    q2: &str,
    max_len: usize,
) -> Result<PairScore> {
    let left = embed_text(table, q1, max_len, Side::Left)?;
    let right = embed_text(table, q2, max_len, Side::Right)?;
    let left_encoding = params.encode(&left.vectors, &left.mask)?;
    let right_encoding = params.encode(&right.vectors, &right.mask)?;
    Ok(PairScore {
        similarity: manhattan_similarity(&left_encoding.pooled, &right_encoding.pooled),
        left_encoding,
        right_encoding,
    })
}

/// Order by similarity descending, then by index ascending.
pub fn rank_scored(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Top-`k` candidates by similarity to `query`. Candidates that tokenize to
/// nothing are skipped.
pub fn rank_against_corpus(
    params: &HbamParameters,
    table: &EmbeddingTable,
    query: &str,
    candidates: &[impl AsRef<str>],
    k: usize,
    max_len: usize,
) -> Result<Vec<(usize, f64)>> {
    let q = encode_text(params, table, query, max_len)?;
    let scored = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            encode_text(params, table, c.as_ref(), max_len)
                .ok()
                .map(|enc| (i, manhattan_similarity(&q.pooled, &enc.pooled)))
        })
        .collect();
    Ok(rank_scored(scored, k.max(1)))
}

/// Squared error between pair similarity and label, with its parameter
/// gradient accumulated into `grads`. Returns `(loss, similarity)`.
pub fn pair_loss_and_grad(
    params: &HbamParameters,
    left: &EmbeddedSequence,
    right: &EmbeddedSequence,
    label: f64,
    grads: &mut HbamParameters,
) -> Result<(f64, f64)> {
    let (enc_l, cache_l) = params.encode_cached(&left.vectors, &left.mask)?;
    let (enc_r, cache_r) = params.encode_cached(&right.vectors, &right.mask)?;
    let sim = manhattan_similarity(&enc_l.pooled, &enc_r.pooled);
    let err = sim - label;
    let d_sim = 2.0 * err;
    let d_left: Vector = enc_l
        .pooled
        .iter()
        .zip(enc_r.pooled.iter())
        .map(|(a, b)| -d_sim * sim * sign(a - b))
        .collect::<Vec<_>>()
        .into();
    let d_right: Vec<f64> = d_left.iter().map(|v| -v).collect();
    params.encode_backward(&enc_l, &cache_l, &d_left, grads);
    params.encode_backward(&enc_r, &cache_r, &d_right, grads);
    Ok((err * err, sim))
}

/// Squared-error pair loss, forward only.
pub fn pair_loss(
    params: &HbamParameters,
    left: &EmbeddedSequence,
    right: &EmbeddedSequence,
    label: f64,
) -> Result<f64> {
    let l = params.encode(&left.vectors, &left.mask)?;
    let r = params.encode(&right.vectors, &right.mask)?;
    let err = manhattan_similarity(&l.pooled, &r.pooled) - label;
    Ok(err * err)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Encoder weights plus everything needed to turn raw text into encodings.
#[derive(Debug, Clone)]
pub struct SimilarityModel {
    pub params: HbamParameters,
    pub table: EmbeddingTable,
    pub max_len: usize,
}

impl SimilarityModel {
    pub fn new(params: HbamParameters, table: EmbeddingTable, max_len: usize) -> Result<Self> {
        params.validate()?;
        if params.dims().embedding_dim != table.dim() {
            return Err(Error::Shape(format!(
                "model expects {}-dim embeddings but the vector table has {}",
                params.dims().embedding_dim,
                table.dim()
            )));
        }
        if max_len == 0 {
            return Err(Error::InvalidArgument("max_seq_length must be at least 1".into()));
        }
        Ok(SimilarityModel {
            params,
            table,
            max_len,
        })
    }

    pub fn encode(&self, text: &str) -> Result<SentenceEncoding> {
        encode_text(&self.params, &self.table, text, self.max_len)
    }

    pub fn score(&self, q1: &str, q2: &str) -> Result<PairScore> {
        score_pair(&self.params, &self.table, q1, q2, self.max_len)
    }

    pub fn rank(&self, query: &str, candidates: &[impl AsRef<str>], k: usize) -> Result<Vec<(usize, f64)>> {
        rank_against_corpus(&self.params, &self.table, query, candidates, k, self.max_len)
    }
}
