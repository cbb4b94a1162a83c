//! The training loop: one Adam step per batch, per-epoch learning-rate decay.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{TaskSource, TrainConfig};
use super::eval::{evaluate_with, predict_points, EvalOptions};
use super::finetune::AffineNormalization;
use crate::error::{NiertError, Result};
use crate::model::network::loss_terms;
use crate::model::{init_params, loss_and_grad, Checkpoint, ModelConfig, ParamSet};
use crate::numerics::{adam_step, AdamState, RngStream};
use crate::taskgen::{generate_tasks, read_dataset, InterpolationTask};

/// Stream ids under the training seed.
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Batches buffered ahead of the optimizer.
const PREFETCH_DEPTH: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Mean per-term training error over the epoch.
    pub train_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub batches: usize,
    pub tasks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub mse: f64,
    pub mae: f64,
    pub observed_mse: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub evals: Vec<EvalRecord>,
    pub wall_time_secs: f64,
    pub checkpoint_path: Option<PathBuf>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl TrainReport {
    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Extra inputs to [`train_with`].
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Held-out tasks scored every `eval_every` epochs.
    pub eval_tasks: Option<&'a [InterpolationTask]>,
    /// Applied to every training and evaluation task; evaluation predictions
    /// are mapped back before scoring.
    pub normalization: Option<AffineNormalization>,
    /// Called after each epoch.
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

fn source_tasks(config: &TrainConfig) -> Result<Option<Vec<InterpolationTask>>> {
    match &config.source {
        TaskSource::Generator(_) => Ok(None),
        TaskSource::Dataset(path) => {
            let tasks = read_dataset(path)?;
            if tasks.is_empty() {
                return Err(NiertError::InvalidConfig(format!(
                    "dataset {} holds no tasks",
                    path.display()
                )));
            }
            Ok(Some(tasks))
        }
    }
}

/// Task batches for every epoch, in training order.
fn epoch_batches(
    config: &TrainConfig,
    dataset: Option<&[InterpolationTask]>,
    epoch: usize,
) -> Result<Vec<Vec<InterpolationTask>>> {
    let tasks: Vec<InterpolationTask> = match (&config.source, dataset) {
        (TaskSource::Generator(gen), _) => {
            let first = (epoch * config.tasks_per_epoch) as u64;
            generate_tasks(gen, first, config.tasks_per_epoch)?
                .0
                .into_iter()
                .map(|g| g.task)
                .collect()
        }
        (TaskSource::Dataset(_), Some(data)) => {
            let mut order: Vec<usize> = (0..data.len()).collect();
            RngStream::new(config.seed, SHUFFLE_STREAM)
                .derive(epoch as u64)
                .shuffle(&mut order);
            if config.tasks_per_epoch > 0 {
                order.truncate(config.tasks_per_epoch);
            }
            order.into_iter().map(|i| data[i].clone()).collect()
        }
        (TaskSource::Dataset(_), None) => unreachable!("dataset loaded before training"),
    };
    let mut batches = Vec::new();
    let mut it = tasks.into_iter().peekable();
    while it.peek().is_some() {
        batches.push(it.by_ref().take(config.batch_size).collect());
    }
    Ok(batches)
}

/// Summed objective and gradient of one batch, averaged over its terms.
///
/// Per-task gradients are computed in parallel and added in task order, so
/// the result does not depend on the thread count.
pub fn batch_gradient(
    batch: &[InterpolationTask],
    params: &ParamSet,
    config: &ModelConfig,
    scope: crate::model::LossScope,
) -> Result<(f64, Vec<f64>, usize)> {
    let terms: usize = batch.iter().map(|t| loss_terms(t, scope)).sum();
    if terms == 0 {
        return Err(NiertError::InvalidConfig("batch has no loss terms".into()));
    }
    let scale = 1.0 / terms as f64;
    let parts = batch
        .par_iter()
        .map(|t| {
            let (v, g) = loss_and_grad(t, params, config, scope, scale)?;
            if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(NiertError::NonFiniteLoss {
                    source_id: t.source_id.clone(),
                });
            }
            Ok((v, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut grad = vec![0.0; params.num_scalars()];
    for (v, g) in parts {
        total += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad, terms))
}

/// Initial parameters: the checkpoint's when given, else a seeded draw.
pub fn initial_params(
    model_config: &ModelConfig,
    seed: u64,
    init: Option<&Checkpoint>,
) -> Result<ParamSet> {
    model_config.validate()?;
    match init {
        Some(ck) => {
            ck.params.check_matches(model_config)?;
            Ok(ck.params.clone())
        }
        None => init_params(model_config, &mut RngStream::new(seed, INIT_STREAM)),
    }
}

pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    init: Option<&Checkpoint>,
) -> Result<(ParamSet, TrainReport)> {
    train_with(model_config, train_config, init, TrainOptions::default())
}

pub fn train_with(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    init: Option<&Checkpoint>,
    mut options: TrainOptions<'_>,
) -> Result<(ParamSet, TrainReport)> {
    let start = Instant::now();
    train_config.validate()?;
    let mut params = initial_params(model_config, train_config.seed, init)?;
    let mut report = TrainReport::default();
    report
        .metadata
        .insert("loss_scope".into(), serde_json::to_value(train_config.loss_scope).expect("scope"));
    report.metadata.insert(
        "attention".into(),
        serde_json::to_value(model_config.attention).expect("attention"),
    );
    if train_config.epochs == 0 {
        report.wall_time_secs = start.elapsed().as_secs_f64();
        return Ok((params, report));
    }

    let mut loss_config = model_config.clone();
    loss_config.loss_norm = train_config.loss_norm;
    let dataset = source_tasks(train_config)?;
    let normalization = options.normalization.clone();
    let mut adam = AdamState::new(params.num_scalars(), train_config.adam())?;
    let mut flat = params.flatten();

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel::<Result<(usize, Vec<InterpolationTask>)>>(PREFETCH_DEPTH);
        let dataset = dataset.as_deref();
        let norm = normalization.as_ref();
        scope.spawn(move || {
            for epoch in 0..train_config.epochs {
                let batches = match epoch_batches(train_config, dataset, epoch) {
                    Ok(b) => b,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                };
                for batch in batches {
                    let batch = match norm {
                        Some(n) => batch.iter().map(|t| n.apply(t)).collect(),
                        None => batch,
                    };
                    if tx.send(Ok((epoch, batch))).is_err() {
                        return;
                    }
                }
            }
        });

        let mut current = 0;
        let mut epoch_sum = 0.0;
        let mut epoch_terms = 0;
        let mut batches = 0;
        let mut tasks = 0;
        let mut finish_epoch = |epoch: usize,
                                adam: &mut AdamState,
                                params: &ParamSet,
                                sum: f64,
                                terms: usize,
                                batches: usize,
                                tasks: usize,
                                report: &mut TrainReport|
         -> Result<()> {
            let record = EpochRecord {
                epoch: epoch + 1,
                train_loss: sum / terms.max(1) as f64,
                lr: adam.lr,
                batches,
                tasks,
            };
            if let Some(cb) = options.on_epoch.as_mut() {
                cb(&record);
            }
            report.epochs.push(record);
            adam.decay();
            let every = train_config.eval_every;
            if let (Some(eval), true) = (options.eval_tasks, every > 0 && (epoch + 1) % every == 0) {
                let m = evaluate_normalized(params, &loss_config, eval, normalization.as_ref())?;
                report.evals.push(EvalRecord {
                    epoch: epoch + 1,
                    mse: m.mse(),
                    mae: m.mae(),
                    observed_mse: m.observed_mse(),
                });
            }
            Ok(())
        };

        for msg in rx {
            let (epoch, batch) = msg?;
            if epoch != current {
                finish_epoch(
                    current, &mut adam, &params, epoch_sum, epoch_terms, batches, tasks, &mut report,
                )?;
                (current, epoch_sum, epoch_terms, batches, tasks) = (epoch, 0.0, 0, 0, 0);
            }
            let (value, grad, terms) =
                batch_gradient(&batch, &params, &loss_config, train_config.loss_scope)?;
            adam_step(&mut flat, &grad, &mut adam)?;
            params.assign_flat(&flat)?;
            epoch_sum += value * terms as f64;
            epoch_terms += terms;
            batches += 1;
            tasks += batch.len();
        }
        finish_epoch(
            current, &mut adam, &params, epoch_sum, epoch_terms, batches, tasks, &mut report,
        )
    })?;

    if !params.is_finite() {
        return Err(NiertError::NonFiniteValue("parameters after training".into()));
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((params, report))
}

/// Target metrics on `tasks`, scoring predictions in the tasks' own units.
pub fn evaluate_normalized(
    params: &ParamSet,
    config: &ModelConfig,
    tasks: &[InterpolationTask],
    normalization: Option<&AffineNormalization>,
) -> Result<super::eval::MetricTable> {
    let predict = |t: &InterpolationTask| match normalization {
        Some(n) => {
            let rows = predict_points(&n.apply(t), params, config)?;
            Ok(rows.iter().map(|r| n.invert(r)).collect())
        }
        None => predict_points(t, params, config),
    };
    evaluate_with(tasks, predict, &EvalOptions::default()).map(|(m, _)| m)
}
