//! Reference-free dialog response evaluation.
//!
//! This crate holds everything that is pure computation: the dialog data model,
//! word-overlap and embedding metrics, the masked-LM and retrieval sub-metric
//! procedures (behind pluggable backends), the quality regression that combines
//! sub-metrics into an overall score, and the correlation statistics used to
//! benchmark metrics against human ratings.
//!
//! It is `no_std` and only needs an allocator. File formats, checkpoints,
//! report rendering and the command-line tool live in the `usr-eval` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod corpus;
pub mod embedding;
mod error;
pub mod hash;
pub mod mlm;
pub mod overlap;
pub mod regression;
pub mod retrieval;
mod special;
pub mod stats;
pub mod tokens;

pub use error::{Error, Result};
pub use tokens::{normalize_tokens, TokenSequence};

/// Name of the ground-truth response source. Rows with this system id are
/// excluded from correlation benchmarks by default.
pub const GROUND_TRUTH_SYSTEM: &str = "ground-truth";
