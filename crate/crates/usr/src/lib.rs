//! Dataset adapters, backend checkpoints, score files, reports and the
//! pipeline behind the `usr` command.

pub mod adapters;
pub mod backends;
pub mod benchmark;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod fingerprint;
pub mod metrics;
pub mod models;
pub mod report;
pub mod scores;
pub mod synthetic;

pub use error::{EvalError, Result};
