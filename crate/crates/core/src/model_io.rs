//! Self-describing JSON model file.
//!
//! ```json
//! { "format": "medqa-hbam", "format_version": 1,
//!   "dims": {"embedding_dim": 300, "hidden": 100, "attn_dim": 200},
//!   "seed": 42, "max_seq_length": 10, "oov_seed": 42,
//!   "parameters": [{"name": "forward.forget_w", "shape": [100, 400], "data": [...]}, ...] }
//! ```
//!
//! Parameter blocks appear in declaration order. Floats are written with
//! shortest round-trip formatting and parsed with correct rounding, so a
//! save/load cycle is bit-exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderDims, HbamParameters};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "medqa-hbam";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub format_version: u32,
    pub dims: EncoderDims,
    pub seed: u64,
    pub max_seq_length: usize,
    pub oov_seed: u64,
    pub parameters: Vec<ParameterBlock>,
}

/// Loaded model: weights plus the settings needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: HbamParameters,
    pub seed: u64,
    pub max_seq_length: usize,
    pub oov_seed: u64,
}

fn block_shapes(dims: EncoderDims) -> Vec<Vec<usize>> {
    let gate_w = vec![dims.hidden, dims.hidden + dims.embedding_dim];
    let gate_b = vec![dims.hidden];
    let mut shapes = Vec::new();
    for _ in 0..2 {
        for _ in 0..4 {
            shapes.push(gate_w.clone());
            shapes.push(gate_b.clone());
        }
    }
    shapes.push(vec![dims.attn_dim, 2 * dims.hidden]);
    shapes.push(vec![dims.attn_dim]);
    shapes.push(vec![dims.attn_dim]);
    shapes
}

impl ModelFile {
    pub fn from_model(model: &SavedModel) -> Self {
        let dims = model.params.dims();
        let parameters = model
            .params
            .tensors()
            .into_iter()
            .zip(block_shapes(dims))
            .map(|((name, data), shape)| ParameterBlock {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        ModelFile {
            format: FORMAT_NAME.into(),
            format_version: FORMAT_VERSION,
            dims,
            seed: model.seed,
            max_seq_length: model.max_seq_length,
            oov_seed: model.oov_seed,
            parameters,
        }
    }

    pub fn into_model(self) -> Result<SavedModel> {
        if self.format != FORMAT_NAME {
            return Err(Error::Format(format!("unknown format {:?}", self.format)));
        }
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let dims = self.dims;
        if dims.hidden == 0 || dims.embedding_dim == 0 || dims.attn_dim == 0 {
            return Err(Error::Format(format!("invalid dims {dims:?}")));
        }
        let mut params = HbamParameters::zeros(dims);
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        if self.parameters.len() != names.len() {
            return Err(Error::Format(format!(
                "expected {} parameter blocks, found {}",
                names.len(),
                self.parameters.len()
            )));
        }
        for (((block, dst), name), shape) in self
            .parameters
            .iter()
            .zip(params.tensors_mut())
            .zip(&names)
            .zip(block_shapes(dims))
        {
            if &block.name != name || block.shape != shape || block.data.len() != dst.len() {
                return Err(Error::Format(format!(
                    "block {:?} {:?} does not match expected {name:?} {shape:?}",
                    block.name, block.shape
                )));
            }
            if block.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter block {name}")));
            }
            dst.copy_from_slice(&block.data);
        }
        if self.max_seq_length == 0 {
            return Err(Error::Format("max_seq_length must be at least 1".into()));
        }
        Ok(SavedModel {
            params,
            seed: self.seed,
            max_seq_length: self.max_seq_length,
            oov_seed: self.oov_seed,
        })
    }
}

pub fn save_model<W: Write>(model: &SavedModel, out: W) -> Result<()> {
    serde_json::to_writer(out, &ModelFile::from_model(model)).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_model<R: Read>(source: R) -> Result<SavedModel> {
    let file: ModelFile = serde_json::from_reader(source).map_err(|e| Error::Format(e.to_string()))?;
    file.into_model()
}
