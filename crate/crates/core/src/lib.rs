//! Hybrid medical question answering: a typed knowledge graph answers what it
//! can, and a Siamese BiLSTM-attention similarity model ranks a QA corpus for
//! everything else.

pub mod corpus;
pub mod embeddings;
pub mod encoder;
pub mod entity;
pub mod error;
pub mod graph;
pub mod model_io;
pub mod numeric;
pub mod router;
pub mod similarity;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
