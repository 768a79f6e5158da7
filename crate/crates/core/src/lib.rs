//! Nonlinear hyperspectral unmixing with a model-based autoencoder.
//!
//! The decoder adds a learned nonlinear fluctuation to the linear mixture of
//! the endmembers; the encoder inverts it through a trainable surrogate of
//! the endmember pseudoinverse. Around the model sit a scene simulator,
//! classical baselines (VCA, FCLS), metrics, and a CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aecmodel;
pub mod classic;
pub mod cli_io;
pub mod diffcore;
mod error;
pub mod metrics;
pub mod simdata;
pub mod trainer;

pub use error::{Error, Result};
