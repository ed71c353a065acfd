use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{softmax, Matrix, Vector};

/// Word-attention projection and context vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub proj_w: Matrix,
    pub proj_b: Vector,
    pub context: Vector,
}

/// Per-token states, their attention weights, and the pooled sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEncoding {
    pub token_states: Vec<Vector>,
    pub attention_weights: Vector,
    pub pooled: Vector,
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    /// `tanh(W h_t + b)` per position; empty at pads.
    hidden_repr: Vec<Vec<f64>>,
}

impl AttentionParams {
    pub fn zeros(attn_dim: usize, state_dim: usize) -> Self {
        AttentionParams {
            proj_w: Matrix::zeros(attn_dim, state_dim),
            proj_b: Vector::zeros(attn_dim),
            context: Vector::zeros(attn_dim),
        }
    }

    pub fn attn_dim(&self) -> usize {
        self.proj_w.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.proj_w.cols()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.attn_dim();
        if d == 0 || self.proj_b.len() != d || self.context.len() != d {
            return Err(Error::Shape(format!(
                "attention projection {}x{} with bias {} and context {}",
                d,
                self.state_dim(),
                self.proj_b.len(),
                self.context.len()
            )));
        }
        Ok(())
    }

    pub fn pool(&self, token_states: &[Vector], mask: &[bool]) -> Result<SentenceEncoding> {
        if token_states.len() != mask.len() {
            return Err(Error::Shape(format!(
                "{} token states but {} mask entries",
                token_states.len(),
                mask.len()
            )));
        }
        if let Some(bad) = token_states.iter().find(|s| s.len() != self.state_dim()) {
            return Err(Error::Shape(format!(
                "token state has length {} but attention expects {}",
                bad.len(),
                self.state_dim()
            )));
        }
        self.pool_cached(token_states, mask).map(|(enc, _)| enc)
    }

    pub(crate) fn pool_cached(
        &self,
        token_states: &[Vector],
        mask: &[bool],
    ) -> Result<(SentenceEncoding, AttentionCache)> {
        if !mask.iter().any(|m| *m) {
            return Err(Error::EmptyInput("attention over zero real tokens".into()));
        }
        let d = self.attn_dim();
        let mut hidden_repr = Vec::with_capacity(mask.len());
        let mut scores = vec![0.0; mask.len()];
        for (t, (state, &live)) in token_states.iter().zip(mask).enumerate() {
            if !live {
                hidden_repr.push(Vec::new());
                continue;
            }
            let mut u = vec![0.0; d];
            self.proj_w.affine_into(state, &self.proj_b, &mut u);
            u.iter_mut().for_each(|v| *v = v.tanh());
            scores[t] = self.context.dot(&u);
            hidden_repr.push(u);
        }
        let weights = softmax(&scores, mask)?;
        let mut pooled = Vector::zeros(self.state_dim());
        for (state, &a) in token_states.iter().zip(weights.iter()) {
            if a != 0.0 {
                pooled.axpy(a, state);
            }
        }
        Ok((
            SentenceEncoding {
                token_states: token_states.to_vec(),
                attention_weights: weights,
                pooled,
            },
            AttentionCache { hidden_repr },
        ))
    }

    /// Given d(loss)/d(pooled), accumulate parameter gradients and return
    /// d(loss)/d(token state) per position (zero at pads).
    pub(crate) fn pool_backward(
        &self,
        enc: &SentenceEncoding,
        cache: &AttentionCache,
        d_pooled: &[f64],
        grads: &mut AttentionParams,
    ) -> Vec<Vec<f64>> {
        let alpha = &enc.attention_weights;
        let d_alpha: Vec<f64> = enc
            .token_states
            .iter()
            .map(|h| h.iter().zip(d_pooled).map(|(a, b)| a * b).sum())
            .collect();
        let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();

        let mut d_states = Vec::with_capacity(alpha.len());
        for (t, state) in enc.token_states.iter().enumerate() {
            let u = &cache.hidden_repr[t];
            if u.is_empty() {
                d_states.push(vec![0.0; state.len()]);
                continue;
            }
            let d_score = alpha[t] * (d_alpha[t] - mean);
            grads.context.axpy(d_score, u);
            let d_pre: Vec<f64> = u
                .iter()
                .zip(self.context.iter())
                .map(|(&uk, &ck)| d_score * ck * (1.0 - uk * uk))
                .collect();
            grads.proj_w.add_outer(&d_pre, state);
            grads.proj_b.axpy(1.0, &d_pre);
            let mut d_state: Vec<f64> = d_pooled.iter().map(|g| alpha[t] * g).collect();
            self.proj_w.transpose_matvec_acc(&d_pre, &mut d_state);
            d_states.push(d_state);
        }
        d_states
    }

    pub(crate) fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("attention.proj_w", self.proj_w.data()),
            ("attention.proj_b", &self.proj_b[..]),
            ("attention.context", &self.context[..]),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.proj_w.data_mut(),
            &mut self.proj_b[..],
            &mut self.context[..],
        ]
    }
}
