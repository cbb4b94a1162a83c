//! Classical interpolators: multiquadric RBF and Shepard IDW.

pub mod idw;
pub mod rbf;

pub use idw::{idw_eval, idw_predict_task};
pub use rbf::{rbf_eval, rbf_fit, rbf_fit_task, RbfModel};
