//! Deterministic numeric substrate shared by every other module.

pub mod adam;
pub mod compensated;
pub mod finite_diff;
pub mod graph;
pub mod linalg;
pub mod matrix;
pub mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use finite_diff::{finite_diff_grad, max_relative_error};
pub use graph::{ErrorNorm, Gradients, Graph, NodeId};
pub use linalg::{linear_solve, lu_factor, LuFactors};
pub use matrix::Matrix;
pub use rng::RngStream;
