//! Command-line and HTTP front ends for `medqa-core`.

pub mod commands;
pub mod service;
pub mod stack;
