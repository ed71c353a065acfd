//! Supervised training of the encoder on labeled duplicate pairs.
//!
//! Loss is the batch-mean squared error between pair similarity and label.
//! Updates use Adam (β₁ = 0.9, β₂ = 0.999). Pair gradients inside a batch are
//! computed in fixed-size chunks on the rayon pool and summed in pair order,
//! so a run is bit-reproducible regardless of thread count.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{embed_sequence, tokenize, EmbeddedSequence, EmbeddingTable};
use crate::encoder::{EncoderDims, HbamParameters};
use crate::error::{Error, Result};
use crate::similarity::{pair_loss_and_grad, SimilarityModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub max_seq_length: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 9,
            hidden: 16,
            embedding_dim: 300,
            max_seq_length: 10,
            learning_rate: 1e-3,
            seed: 42,
            train_fraction: 0.9,
        }
    }
}

impl TrainConfig {
    /// Hyperparameters reported for the full-size Quora experiment.
    pub fn full_scale() -> Self {
        TrainConfig {
            batch_size: 1024,
            epochs: 9,
            hidden: 100,
            embedding_dim: 300,
            ..TrainConfig::default()
        }
    }

    /// Parse a `key = value` config file; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: TrainConfig =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("hidden", self.hidden),
            ("embedding_dim", self.embedding_dim),
            ("max_seq_length", self.max_seq_length),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims::new(self.embedding_dim, self.hidden)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub q1: String,
    pub q2: String,
    pub label: u8,
}

impl LabeledPair {
    pub fn new(q1: impl Into<String>, q2: impl Into<String>, label: u8) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {label}")));
        }
        Ok(LabeledPair {
            q1: q1.into(),
            q2: q2.into(),
            label,
        })
    }
}

fn split_point(n: usize, fraction: f64) -> usize {
    // guard against 0.7 * 10 = 7.000000000000001
    ((fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize
}

/// Seeded shuffle, then the first ⌈fraction·N⌉ pairs train and the rest test.
pub fn split<T: Clone>(pairs: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs to split".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = split_point(pairs.len(), train_fraction);
    let train = order[..cut].iter().map(|&i| pairs[i].clone()).collect();
    let test = order[cut..].iter().map(|&i| pairs[i].clone()).collect();
    Ok((train, test))
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn update(&mut self, params: &mut HbamParameters, grads: &HbamParameters) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let grads = grads.to_flat();
        let mut idx = 0;
        for block in params.tensors_mut() {
            for p in block.iter_mut() {
                let g = grads[idx];
                self.m[idx] = self.beta1 * self.m[idx] + (1.0 - self.beta1) * g;
                self.v[idx] = self.beta2 * self.v[idx] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[idx] / bc1;
                let v_hat = self.v[idx] / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                idx += 1;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HbamParameters,
    /// Mean pair loss per epoch, measured during the epoch's forward passes.
    pub loss_history: Vec<f64>,
}

struct PreparedPair {
    left: EmbeddedSequence,
    right: EmbeddedSequence,
    label: f64,
}

/// Pairs per gradient chunk. Fixed so summation order never depends on the
/// size of the thread pool.
const CHUNK: usize = 8;

/// Summed gradients of one chunk plus each pair's loss.
type ChunkGrads = (HbamParameters, Vec<(usize, f64)>);

pub fn train(config: &TrainConfig, table: &EmbeddingTable, pairs: &[LabeledPair]) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no training pairs".into()));
    }
    if table.dim() != config.embedding_dim {
        return Err(Error::Shape(format!(
            "config embedding_dim is {} but vectors have dim {}",
            config.embedding_dim,
            table.dim()
        )));
    }
    let prepared = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let l = tokenize(&p.q1);
            let r = tokenize(&p.q2);
            if l.is_empty() || r.is_empty() {
                return Err(Error::EmptyInput(format!("training pair {i} has an empty question")));
            }
            Ok(PreparedPair {
                left: embed_sequence(table, &l, config.max_seq_length),
                right: embed_sequence(table, &r, config.max_seq_length),
                label: f64::from(p.label),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let dims = config.dims();
    let mut params = HbamParameters::init(dims, config.seed)?;
    let mut adam = Adam::new(params.num_params(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut pair_losses = vec![0.0; prepared.len()];
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let chunk_results: Vec<Result<ChunkGrads>> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grads = HbamParameters::zeros(dims);
                    let mut losses = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let p = &prepared[i];
                        let (loss, _) = pair_loss_and_grad(&params, &p.left, &p.right, p.label, &mut grads)?;
                        losses.push((i, loss));
                    }
                    Ok((grads, losses))
                })
                .collect();

            let mut grads = HbamParameters::zeros(dims);
            let mut batch_loss = 0.0;
            for result in chunk_results {
                let (g, losses) = result?;
                grads.accumulate(&g);
                for (i, loss) in losses {
                    pair_losses[i] = loss;
                    batch_loss += loss;
                }
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.update(&mut params, &grads);
        }
        // summed in pair-index order so the value does not depend on the shuffle
        let epoch_loss = pair_losses.iter().sum::<f64>() / prepared.len() as f64;
        loss_history.push(epoch_loss);
    }

    Ok(TrainOutcome { params, loss_history })
}

pub fn write_loss_csv<W: Write>(mut out: W, history: &[f64]) -> std::io::Result<()> {
    writeln!(out, "epoch,loss")?;
    for (i, loss) in history.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, loss)?;
    }
    Ok(())
}

/// Anything that can assign a similarity to a question pair.
pub trait PairScorer {
    fn similarity(&self, pair: &LabeledPair) -> Result<f64>;
}

impl PairScorer for SimilarityModel {
    fn similarity(&self, pair: &LabeledPair) -> Result<f64> {
        Ok(self.score(&pair.q1, &pair.q2)?.similarity)
    }
}

impl<F> PairScorer for F
where
    F: Fn(&LabeledPair) -> f64,
{
    fn similarity(&self, pair: &LabeledPair) -> Result<f64> {
        Ok(self(pair))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub threshold: f64,
    pub n_correct: usize,
    pub n_total: usize,
    /// Mean similarity over label-1 pairs, if any.
    pub mean_similarity_duplicate: Option<f64>,
    /// Mean similarity over label-0 pairs, if any.
    pub mean_similarity_distinct: Option<f64>,
}

impl EvalReport {
    /// Mean duplicate similarity minus mean non-duplicate similarity.
    pub fn separation(&self) -> Option<f64> {
        Some(self.mean_similarity_duplicate? - self.mean_similarity_distinct?)
    }
}

/// Predict duplicate iff similarity ≥ threshold.
pub fn evaluate(scorer: &dyn PairScorer, pairs: &[LabeledPair], threshold: f64) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no evaluation pairs".into()));
    }
    let mut n_correct = 0;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for pair in pairs {
        let sim = scorer.similarity(pair)?;
        let predicted = u8::from(sim >= threshold);
        if predicted == pair.label {
            n_correct += 1;
        }
        let class = usize::from(pair.label);
        sums[class] += sim;
        counts[class] += 1;
    }
    let mean = |c: usize| (counts[c] > 0).then(|| sums[c] / counts[c] as f64);
    Ok(EvalReport {
        accuracy: n_correct as f64 / pairs.len() as f64,
        threshold,
        n_correct,
        n_total: pairs.len(),
        mean_similarity_duplicate: mean(1),
        mean_similarity_distinct: mean(0),
    })
}
