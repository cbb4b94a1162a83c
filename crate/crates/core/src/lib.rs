//! NIERT: a transformer-encoder scattered-data interpolator.
//!
//! Observed points (position and value) and target points (position only,
//! value replaced by a trainable mask token) are embedded into one space and
//! processed by transformer layers whose attention only ever reads observed
//! points. The crate also ships the synthetic task generators used to train
//! it, classical RBF and IDW baselines, a small reverse-mode autodiff engine,
//! and the training/evaluation harness behind the `niert` binary.

pub mod baseline;
pub mod cli;
pub mod error;
pub mod model;
pub mod numerics;
pub mod taskgen;
pub mod trainer;

pub use error::{NiertError, Result};
