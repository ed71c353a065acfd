//! Sentence encoder: a bidirectional LSTM over embedded tokens, pooled by
//! word attention into a single vector.
//!
//! Pad positions are skipped entirely. They produce zero token states, do not
//! advance either recurrence and receive zero attention weight, so the
//! encoding depends only on the real tokens and their order.

mod attention;
mod lstm;

pub use attention::{AttentionParams, SentenceEncoding};
pub use lstm::{LstmCellParams, LstmState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Vector;
use attention::AttentionCache;
use lstm::StepCache;

/// Shape of an HBAM encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
}

impl EncoderDims {
    /// Attention width defaults to the BiLSTM state width.
    pub fn new(embedding_dim: usize, hidden: usize) -> Self {
        EncoderDims {
            embedding_dim,
            hidden,
            attn_dim: 2 * hidden,
        }
    }
}

/// The full Siamese weight set: both LSTM directions plus attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbamParameters {
    pub forward_cell: LstmCellParams,
    pub backward_cell: LstmCellParams,
    pub attention: AttentionParams,
}

impl HbamParameters {
    pub fn zeros(dims: EncoderDims) -> Self {
        HbamParameters {
            forward_cell: LstmCellParams::zeros(dims.hidden, dims.embedding_dim),
            backward_cell: LstmCellParams::zeros(dims.hidden, dims.embedding_dim),
            attention: AttentionParams::zeros(dims.attn_dim, 2 * dims.hidden),
        }
    }

    /// Seeded initialization: weights uniform in ±1/√fan_in, biases zero,
    /// context vector uniform and nonzero.
    pub fn init(dims: EncoderDims, seed: u64) -> Result<Self> {
        if dims.embedding_dim == 0 || dims.hidden == 0 || dims.attn_dim == 0 {
            return Err(Error::InvalidArgument(format!("all encoder dims must be ≥ 1: {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = HbamParameters::zeros(dims);
        for cell in [&mut p.forward_cell, &mut p.backward_cell] {
            let fan_in = cell.forget_w.cols();
            for w in [
                &mut cell.forget_w,
                &mut cell.input_w,
                &mut cell.candidate_w,
                &mut cell.output_w,
            ] {
                fill_uniform(&mut rng, w.data_mut(), fan_in);
            }
        }
        let fan_in = p.attention.proj_w.cols();
        fill_uniform(&mut rng, p.attention.proj_w.data_mut(), fan_in);
        let bound = 1.0 / (dims.attn_dim as f64).sqrt();
        for v in p.attention.context.iter_mut() {
            while *v == 0.0 {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            embedding_dim: self.forward_cell.input_size(),
            hidden: self.forward_cell.hidden(),
            attn_dim: self.attention.attn_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.forward_cell.validate()?;
        self.backward_cell.validate()?;
        self.attention.validate()?;
        if self.forward_cell.forget_w.same_shape(&self.backward_cell.forget_w)
            && self.attention.state_dim() == 2 * self.forward_cell.hidden()
        {
            Ok(())
        } else {
            Err(Error::Shape("forward/backward cells and attention disagree on sizes".into()))
        }
    }

    /// Named parameter blocks in declaration order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (prefix, cell) in [("forward", &self.forward_cell), ("backward", &self.backward_cell)] {
            out.extend(cell.tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)));
        }
        out.extend(self.attention.tensors().into_iter().map(|(n, t)| (n.to_owned(), t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.forward_cell.tensors_mut();
        out.extend(self.backward_cell.tensors_mut());
        out.extend(self.attention.tensors_mut());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, model has {}",
                values.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// `self += other`, blockwise.
    pub(crate) fn accumulate(&mut self, other: &HbamParameters) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// BiLSTM token states: `[forward h ; backward h]` at real positions, zero at pads.
    pub fn bilstm_encode(&self, embedded: &[Vector], mask: &[bool]) -> Result<Vec<Vector>> {
        self.check_inputs(embedded, mask)?;
        Ok(self.bilstm_cached(embedded, mask).0)
    }

    pub fn attention_pool(&self, token_states: &[Vector], mask: &[bool]) -> Result<SentenceEncoding> {
        self.attention.pool(token_states, mask)
    }

    /// Full encoder: BiLSTM followed by attention pooling.
    pub fn encode(&self, embedded: &[Vector], mask: &[bool]) -> Result<SentenceEncoding> {
        self.check_inputs(embedded, mask)?;
        self.encode_cached(embedded, mask).map(|(enc, _)| enc)
    }

    fn check_inputs(&self, embedded: &[Vector], mask: &[bool]) -> Result<()> {
        if embedded.len() != mask.len() {
            return Err(Error::Shape(format!(
                "{} embedded tokens but {} mask entries",
                embedded.len(),
                mask.len()
            )));
        }
        let dim = self.forward_cell.input_size();
        for (v, &m) in embedded.iter().zip(mask) {
            if m && v.len() != dim {
                return Err(Error::Shape(format!(
                    "token embedding has length {} but encoder expects {dim}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    fn bilstm_cached(&self, embedded: &[Vector], mask: &[bool]) -> (Vec<Vector>, BiLstmCache) {
        let hidden = self.forward_cell.hidden();
        let real: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
        let mut states = vec![Vector::zeros(2 * hidden); mask.len()];

        let mut forward = Vec::with_capacity(real.len());
        let mut state = LstmState::zeros(hidden);
        for &t in &real {
            let (next, cache) = self.forward_cell.step_cached(&state.h, &state.c, &embedded[t]);
            states[t][..hidden].copy_from_slice(&next.h);
            forward.push(cache);
            state = next;
        }

        let mut backward = Vec::with_capacity(real.len());
        let mut state = LstmState::zeros(hidden);
        for &t in real.iter().rev() {
            let (next, cache) = self.backward_cell.step_cached(&state.h, &state.c, &embedded[t]);
            states[t][hidden..].copy_from_slice(&next.h);
            backward.push(cache);
            state = next;
        }

        (
            states,
            BiLstmCache {
                real,
                forward,
                backward,
            },
        )
    }

    fn bilstm_backward(&self, cache: &BiLstmCache, d_states: &[Vec<f64>], grads: &mut HbamParameters) {
        let hidden = self.forward_cell.hidden();

        let mut dh = vec![0.0; hidden];
        let mut dc = vec![0.0; hidden];
        for (k, &t) in cache.real.iter().enumerate().rev() {
            for (a, b) in dh.iter_mut().zip(&d_states[t][..hidden]) {
                *a += b;
            }
            let (dh_prev, dc_prev) =
                self.forward_cell
                    .step_backward(&cache.forward[k], &dh, &dc, &mut grads.forward_cell);
            dh = dh_prev;
            dc = dc_prev;
        }

        let mut dh = vec![0.0; hidden];
        let mut dc = vec![0.0; hidden];
        // backward cell processed real positions right-to-left; undo left-to-right
        for (k, &t) in cache.real.iter().rev().enumerate().rev() {
            for (a, b) in dh.iter_mut().zip(&d_states[t][hidden..]) {
                *a += b;
            }
            let (dh_prev, dc_prev) =
                self.backward_cell
                    .step_backward(&cache.backward[k], &dh, &dc, &mut grads.backward_cell);
            dh = dh_prev;
            dc = dc_prev;
        }
    }

    pub(crate) fn encode_cached(
        &self,
        embedded: &[Vector],
        mask: &[bool],
    ) -> Result<(SentenceEncoding, EncoderCache)> {
        let (states, bilstm) = self.bilstm_cached(embedded, mask);
        let (enc, attention) = self.attention.pool_cached(&states, mask)?;
        Ok((enc, EncoderCache { bilstm, attention }))
    }

    /// Accumulate into `grads` the gradient of a loss whose derivative with
    /// respect to the pooled vector is `d_pooled`.
    pub(crate) fn encode_backward(
        &self,
        enc: &SentenceEncoding,
        cache: &EncoderCache,
        d_pooled: &[f64],
        grads: &mut HbamParameters,
    ) {
        let d_states = self
            .attention
            .pool_backward(enc, &cache.attention, d_pooled, &mut grads.attention);
        self.bilstm_backward(&cache.bilstm, &d_states, grads);
    }
}

fn fill_uniform(rng: &mut ChaCha8Rng, data: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in data {
        *v = rng.random_range(-bound..=bound);
    }
}

#[derive(Debug, Clone)]
struct BiLstmCache {
    real: Vec<usize>,
    forward: Vec<StepCache>,
    /// In processing order, i.e. rightmost real token first.
    backward: Vec<StepCache>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    bilstm: BiLstmCache,
    attention: AttentionCache,
}
