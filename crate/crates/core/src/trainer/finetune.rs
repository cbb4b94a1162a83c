//! Continued training from a pre-trained checkpoint on a new task source.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::train::{train_with, TrainOptions, TrainReport};
use crate::error::{NiertError, Result};
use crate::model::{Checkpoint, ParamSet};
use crate::taskgen::{InterpolationTask, ScatteredPoint};

/// Per-channel map `y' = scale · y + shift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineNormalization {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AffineNormalization {
    pub fn new(scale: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        if scale.len() != shift.len() {
            return Err(NiertError::shape(format!(
                "normalization: {} scales, {} shifts",
                scale.len(),
                shift.len()
            )));
        }
        if scale.iter().chain(&shift).any(|v| !v.is_finite()) || scale.contains(&0.0) {
            return Err(NiertError::InvalidConfig(
                "normalization must be finite with nonzero scale".into(),
            ));
        }
        Ok(AffineNormalization { scale, shift })
    }

    pub fn identity(d_y: usize) -> Self {
        AffineNormalization {
            scale: vec![1.0; d_y],
            shift: vec![0.0; d_y],
        }
    }

    /// Maps `[lo, hi]` per channel onto `[0, 1]`.
    pub fn from_range(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let scale = lo.iter().zip(hi).map(|(l, h)| 1.0 / (h - l)).collect();
        let shift = lo.iter().zip(hi).map(|(l, h)| -l / (h - l)).collect();
        Self::new(scale, shift)
    }

    /// Per-channel range of every value in `tasks`, mapped to `[0, 1]`.
    pub fn fit(tasks: &[InterpolationTask]) -> Result<Self> {
        let d_y = tasks.first().map_or(0, |t| t.d_y);
        let mut lo = vec![f64::INFINITY; d_y];
        let mut hi = vec![f64::NEG_INFINITY; d_y];
        for t in tasks {
            for row in t.all_truth() {
                for (c, v) in row.iter().enumerate() {
                    lo[c] = lo[c].min(*v);
                    hi[c] = hi[c].max(*v);
                }
            }
        }
        Self::from_range(&lo, &hi)
    }

    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.scale.iter().zip(&self.shift))
            .map(|(v, (a, b))| a * v + b)
            .collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.scale.iter().zip(&self.shift))
            .map(|(v, (a, b))| (v - b) / a)
            .collect()
    }

    pub fn apply(&self, task: &InterpolationTask) -> InterpolationTask {
        InterpolationTask {
            observed: task
                .observed
                .iter()
                .map(|p| ScatteredPoint {
                    x: p.x.clone(),
                    y: p.y.as_ref().map(|y| self.forward(y)),
                })
                .collect(),
            targets: task.targets.clone(),
            target_truth: task.target_truth.iter().map(|y| self.forward(y)).collect(),
            d_x: task.d_x,
            d_y: task.d_y,
            source_id: task.source_id.clone(),
        }
    }
}

/// Trains `pretrained` further on `train_config.source`, with every task's
/// values passed through `normalization` first.
pub fn finetune(
    pretrained: &Checkpoint,
    train_config: &TrainConfig,
    normalization: AffineNormalization,
    eval_tasks: Option<&[InterpolationTask]>,
) -> Result<(ParamSet, TrainReport)> {
    if normalization.scale.len() != pretrained.config.d_y {
        return Err(NiertError::CheckpointMismatch(format!(
            "normalization has {} channels, checkpoint d_y = {}",
            normalization.scale.len(),
            pretrained.config.d_y
        )));
    }
    let options = TrainOptions {
        eval_tasks,
        normalization: Some(normalization),
        on_epoch: None,
    };
    train_with(&pretrained.config, train_config, Some(pretrained), options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let n = AffineNormalization::new(vec![2.0], vec![1.0]).unwrap();
        for y in [-3.5, 0.0, 0.1, 7.25, 1e6] {
            let back = n.invert(&n.forward(&[y]))[0];
            assert!((back - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn range_maps_to_unit() {
        let n = AffineNormalization::from_range(&[2.0], &[6.0]).unwrap();
        assert_eq!(n.forward(&[2.0]), vec![0.0]);
        assert_eq!(n.forward(&[6.0]), vec![1.0]);
    }

    #[test]
    fn rejects_zero_scale() {
        assert!(AffineNormalization::new(vec![0.0], vec![1.0]).is_err());
        assert!(AffineNormalization::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }
}
