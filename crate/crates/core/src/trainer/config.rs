use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::model::LossScope;
use crate::numerics::{AdamConfig, ErrorNorm};
use crate::taskgen::TaskGenConfig;

/// Where training tasks come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSource {
    /// Tasks sampled on the fly; epoch `e` uses task indices
    /// `e·tasks_per_epoch ..`.
    Generator(TaskGenConfig),
    /// A fixed JSONL dataset, reshuffled every epoch.
    Dataset(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub tasks_per_epoch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub loss_norm: ErrorNorm,
    pub loss_scope: LossScope,
    pub seed: u64,
    /// Evaluate on the held-out set every this many epochs (0 disables).
    pub eval_every: usize,
    pub source: TaskSource,
}

impl TrainConfig {
    /// Desk-scale defaults: 2,048 tasks per epoch in batches of 32, L2 loss,
    /// `lr = 5e-4` decayed by 0.97 per epoch.
    pub fn desk(source: TaskSource) -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            tasks_per_epoch: 2048,
            lr: 5.0e-4,
            lr_decay: 0.97,
            loss_norm: ErrorNorm::L2,
            loss_scope: LossScope::AllPoints,
            seed: 0,
            eval_every: 0,
            source,
        }
    }

    /// The constant-rate preset: `lr = 1e-4`, no decay.
    pub fn constant_rate(source: TaskSource) -> Self {
        TrainConfig {
            lr: 1.0e-4,
            lr_decay: 1.0,
            ..Self::desk(source)
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            decay_rate: self.lr_decay,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(NiertError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(NiertError::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(NiertError::InvalidConfig(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if let TaskSource::Generator(g) = &self.source {
            g.validate()?;
            if self.tasks_per_epoch == 0 {
                return Err(NiertError::InvalidConfig("tasks_per_epoch must be >= 1".into()));
            }
        }
        Ok(())
    }
}
