//! Synthetic interpolation tasks: function families, point scattering and
//! the dataset file format.

pub mod dataset;
pub mod expr;
pub mod gaussian;
pub mod sampler;
pub mod task;

pub use dataset::{read_dataset, write_dataset};
pub use expr::{sample_expression, ExprKind, ExprNode};
pub use gaussian::{sample_gaussian_sum, GaussianComponent, GaussianSumFunction};
pub use sampler::{
    generate_task, generate_tasks, normalize_function, sample_task, Family, GenSummary,
    GeneratedTask, SampledFunction, TaskGenConfig,
};
pub use task::{InterpolationTask, ScatteredPoint};
