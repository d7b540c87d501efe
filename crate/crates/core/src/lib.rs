//! Multi-target tracking with randomly switching motion models.
//!
//! Data association is solved as a linear-programming relaxation over an
//! N-scan window of local hypotheses; the resulting association and model
//! probabilities define a linear system with random coefficient matrices,
//! which is filtered jointly for all tracks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod hypothesis;
pub mod linalg;
pub mod oracle;
pub mod rcmkf;
pub mod selftest;
pub mod simulation;
pub mod tracker;

pub use error::{Error, Result};
