use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, Matrix, Vector};

/// One directional LSTM cell. Every gate reads the concatenation
/// `[h_prev, x]`, so each weight is `hidden × (hidden + input)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub forget_w: Matrix,
    pub forget_b: Vector,
    pub input_w: Matrix,
    pub input_b: Vector,
    pub candidate_w: Matrix,
    pub candidate_b: Vector,
    pub output_w: Matrix,
    pub output_b: Vector,
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Vector::zeros(hidden),
            c: Vector::zeros(hidden),
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    concat: Vec<f64>,
    forget: Vec<f64>,
    input: Vec<f64>,
    candidate: Vec<f64>,
    output: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = || Matrix::zeros(hidden, hidden + input);
        let b = || Vector::zeros(hidden);
        LstmCellParams {
            forget_w: w(),
            forget_b: b(),
            input_w: w(),
            input_b: b(),
            candidate_w: w(),
            candidate_b: b(),
            output_w: w(),
            output_b: b(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forget_w.rows()
    }

    pub fn input_size(&self) -> usize {
        self.forget_w.cols() - self.forget_w.rows()
    }

    pub(crate) fn weights(&self) -> [&Matrix; 4] {
        [&self.forget_w, &self.input_w, &self.candidate_w, &self.output_w]
    }

    pub(crate) fn biases(&self) -> [&Vector; 4] {
        [&self.forget_b, &self.input_b, &self.candidate_b, &self.output_b]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let [f, i, c, o] = self.weights();
        if ![i, c, o].iter().all(|w| w.same_shape(f)) {
            return Err(Error::Shape("LSTM gate weights differ in shape".into()));
        }
        if f.cols() < f.rows() {
            return Err(Error::Shape("LSTM weight narrower than hidden size".into()));
        }
        if self.biases().iter().any(|b| b.len() != f.rows()) {
            return Err(Error::Shape("LSTM bias length differs from hidden size".into()));
        }
        Ok(())
    }

    /// One LSTM update.
    pub fn step(&self, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Result<LstmState> {
        self.check_step_dims(h_prev, c_prev, x)?;
        Ok(self.step_cached(h_prev, c_prev, x).0)
    }

    fn check_step_dims(&self, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Result<()> {
        let hidden = self.hidden();
        if h_prev.len() != hidden || c_prev.len() != hidden {
            return Err(Error::Shape(format!(
                "LSTM state has length {}/{} but cell hidden size is {hidden}",
                h_prev.len(),
                c_prev.len()
            )));
        }
        if x.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "LSTM input has length {} but cell expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    pub(crate) fn step_cached(&self, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> (LstmState, StepCache) {
        let hidden = self.hidden();
        let mut concat = Vec::with_capacity(h_prev.len() + x.len());
        concat.extend_from_slice(h_prev);
        concat.extend_from_slice(x);

        let mut forget = vec![0.0; hidden];
        let mut input = vec![0.0; hidden];
        let mut candidate = vec![0.0; hidden];
        let mut output = vec![0.0; hidden];
        self.forget_w.affine_into(&concat, &self.forget_b, &mut forget);
        self.input_w.affine_into(&concat, &self.input_b, &mut input);
        self.candidate_w.affine_into(&concat, &self.candidate_b, &mut candidate);
        self.output_w.affine_into(&concat, &self.output_b, &mut output);
        for k in 0..hidden {
            forget[k] = sigmoid(forget[k]);
            input[k] = sigmoid(input[k]);
            candidate[k] = candidate[k].tanh();
            output[k] = sigmoid(output[k]);
        }

        let mut c = Vector::zeros(hidden);
        let mut h = Vector::zeros(hidden);
        let mut tanh_c = vec![0.0; hidden];
        for k in 0..hidden {
            c[k] = forget[k] * c_prev[k] + input[k] * candidate[k];
            tanh_c[k] = c[k].tanh();
            h[k] = output[k] * tanh_c[k];
        }
        let cache = StepCache {
            concat,
            forget,
            input,
            candidate,
            output,
            c_prev: c_prev.to_vec(),
            tanh_c,
        };
        (LstmState { h, c }, cache)
    }

    /// Backpropagate one step. `dh`/`dc` are gradients w.r.t. this step's
    /// outputs; returns gradients w.r.t. `h_prev` and `c_prev`. Input
    /// gradients are dropped because embeddings are frozen.
    pub(crate) fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCellParams,
    ) -> (Vec<f64>, Vec<f64>) {
        let hidden = self.hidden();
        let mut d_forget = vec![0.0; hidden];
        let mut d_input = vec![0.0; hidden];
        let mut d_candidate = vec![0.0; hidden];
        let mut d_output = vec![0.0; hidden];
        let mut dc_prev = vec![0.0; hidden];
        for k in 0..hidden {
            let (f, i, g, o, t) = (
                cache.forget[k],
                cache.input[k],
                cache.candidate[k],
                cache.output[k],
                cache.tanh_c[k],
            );
            let dct = dc[k] + dh[k] * o * (1.0 - t * t);
            d_output[k] = dh[k] * t * o * (1.0 - o);
            d_forget[k] = dct * cache.c_prev[k] * f * (1.0 - f);
            d_input[k] = dct * g * i * (1.0 - i);
            d_candidate[k] = dct * i * (1.0 - g * g);
            dc_prev[k] = dct * f;
        }

        let mut d_concat = vec![0.0; cache.concat.len()];
        let pre = [&d_forget, &d_input, &d_candidate, &d_output];
        let (gw, gb) = grads.parts_mut();
        for ((w, (gw, gb)), dz) in self.weights().into_iter().zip(gw.into_iter().zip(gb)).zip(pre) {
            gw.add_outer(dz, &cache.concat);
            gb.axpy(1.0, dz);
            w.transpose_matvec_acc(dz, &mut d_concat);
        }
        d_concat.truncate(hidden);
        (d_concat, dc_prev)
    }

    fn parts_mut(&mut self) -> ([&mut Matrix; 4], [&mut Vector; 4]) {
        (
            [
                &mut self.forget_w,
                &mut self.input_w,
                &mut self.candidate_w,
                &mut self.output_w,
            ],
            [
                &mut self.forget_b,
                &mut self.input_b,
                &mut self.candidate_b,
                &mut self.output_b,
            ],
        )
    }

    pub(crate) fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("forget_w", self.forget_w.data()),
            ("forget_b", &self.forget_b[..]),
            ("input_w", self.input_w.data()),
            ("input_b", &self.input_b[..]),
            ("candidate_w", self.candidate_w.data()),
            ("candidate_b", &self.candidate_b[..]),
            ("output_w", self.output_w.data()),
            ("output_b", &self.output_b[..]),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.forget_w.data_mut(),
            &mut self.forget_b[..],
            self.input_w.data_mut(),
            &mut self.input_b[..],
            self.candidate_w.data_mut(),
            &mut self.candidate_b[..],
            self.output_w.data_mut(),
            &mut self.output_b[..],
        ]
    }
}
