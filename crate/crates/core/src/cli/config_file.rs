//! The JSON run-configuration file.
//!
//! ```json
//! {
//!   "model": {"num_layers": 2, "d_model": 32, "num_heads": 4, "attention": "partial"},
//!   "train": {"epochs": 10, "batch_size": 16, "lr": 5e-4, "loss_scope": "all_points"},
//!   "data":  {"family": "gaussian", "d_x": 1, "total_points": 64, "n_min": 5, "n_max": 50},
//!   "eval":  {"bin_width": 5}
//! }
//! ```
//!
//! Every field is optional; absent fields keep the built-in defaults and
//! command-line flags override both.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::model::{AttentionMode, LossScope};
use crate::numerics::ErrorNorm;
use crate::trainer::Region;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub num_layers: Option<usize>,
    pub d_model: Option<usize>,
    pub num_heads: Option<usize>,
    pub d_xemb: Option<usize>,
    pub d_yemb: Option<usize>,
    pub d_ff: Option<usize>,
    pub attention: Option<AttentionMode>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// `desk` (default) or `constant_rate`.
    pub preset: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub tasks_per_epoch: Option<usize>,
    pub lr: Option<f64>,
    pub lr_decay: Option<f64>,
    pub loss_norm: Option<ErrorNorm>,
    pub loss_scope: Option<LossScope>,
    pub seed: Option<u64>,
    pub eval_every: Option<usize>,
    /// Checkpoint to continue from.
    pub init: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `expr` or `gaussian`.
    pub family: Option<String>,
    pub d_x: Option<usize>,
    pub total_points: Option<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub sigma_base: Option<f64>,
    pub components: Option<usize>,
    pub seed: Option<u64>,
    /// Training dataset; when absent, tasks are generated on the fly.
    pub train_path: Option<PathBuf>,
    /// Held-out dataset scored every `eval_every` epochs.
    pub eval_path: Option<PathBuf>,
    /// Generated held-out tasks when no `eval_path` is given.
    pub eval_count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub bin_width: Option<usize>,
    pub region: Option<Region>,
}

impl RunConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| NiertError::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NiertError::io(path, e))?;
        Self::parse(&text, path)
    }
}
