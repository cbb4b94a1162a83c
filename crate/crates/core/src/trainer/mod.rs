//! Training, evaluation and fine-tuning.

pub mod config;
pub mod eval;
pub mod finetune;
pub mod train;

pub use config::{TaskSource, TrainConfig};
pub use eval::{
    evaluate, evaluate_with, metrics_from_predictions, oracle_predict, predict_points,
    EvalOptions, MetricRow, MetricTable, Region, TaskPrediction,
};
pub use finetune::{finetune, AffineNormalization};
pub use train::{
    batch_gradient, evaluate_normalized, initial_params, train, train_with, EpochRecord,
    EvalRecord, TrainOptions, TrainReport,
};
