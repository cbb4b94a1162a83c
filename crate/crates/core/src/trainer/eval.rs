//! Interpolation metrics over a dataset.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::model::{forward, ModelConfig, ParamSet};
use crate::taskgen::InterpolationTask;

/// Predictions for one task: observed rows first, then targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskPrediction {
    pub source_id: String,
    pub n: usize,
    pub observed_pred: Vec<Vec<f64>>,
    pub observed_truth: Vec<Vec<f64>>,
    pub target_pred: Vec<Vec<f64>>,
    pub target_truth: Vec<Vec<f64>>,
}

/// Axis-aligned box in `[-1, 1]^{d_x}`; targets inside (or outside, when
/// `invert`) contribute to the region-masked MAE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default)]
    pub invert: bool,
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        let inside = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        inside != self.invert
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Width of the observed-count bins.
    pub bin_width: usize,
    pub region: Option<Region>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            bin_width: 5,
            region: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub bin: String,
}

/// Metric rows; the `all` bin holds dataset-wide values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn get(&self, metric: &str, bin: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.bin == bin)
            .map(|r| r.value)
    }

    /// Target-point mean squared error.
    pub fn mse(&self) -> f64 {
        self.get("mse", "all").unwrap_or(f64::NAN)
    }

    pub fn mae(&self) -> f64 {
        self.get("mae", "all").unwrap_or(f64::NAN)
    }

    pub fn observed_mse(&self) -> f64 {
        self.get("observed_mse", "all").unwrap_or(f64::NAN)
    }

    pub fn bins(&self) -> Vec<String> {
        let mut bins: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.bin != "all")
            .map(|r| r.bin.clone())
            .collect();
        bins.dedup();
        bins
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,bin\n");
        for r in &self.rows {
            writeln!(out, "{},{:.17e},{}", r.metric, r.value, r.bin).expect("write to String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |line: usize, message: String| NiertError::Format {
            path: "<metrics>".into(),
            line,
            message,
        };
        if lines.next() != Some("metric,value,bin") {
            return Err(bad(1, "expected header metric,value,bin".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(bad(i + 2, format!("expected 3 fields, got {}", parts.len())));
            }
            let value = parts[1]
                .parse()
                .map_err(|e| bad(i + 2, format!("bad value {}: {e}", parts[1])))?;
            rows.push(MetricRow {
                metric: parts[0].to_string(),
                value,
                bin: parts[2].to_string(),
            });
        }
        Ok(MetricTable { rows })
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    sq: f64,
    abs: f64,
    count: usize,
}

impl Acc {
    fn add(&mut self, pred: &[f64], truth: &[f64]) {
        for (p, t) in pred.iter().zip(truth) {
            let d = p - t;
            self.sq += d * d;
            self.abs += d.abs();
            self.count += 1;
        }
    }

    fn mse(&self) -> f64 {
        self.sq / self.count.max(1) as f64
    }

    fn mae(&self) -> f64 {
        self.abs / self.count.max(1) as f64
    }
}

fn bin_label(n: usize, width: usize) -> (usize, String) {
    let lo = n / width * width;
    (lo, format!("n={lo}-{}", lo + width - 1))
}

/// Aggregates predictions into the metric table.
///
/// `mse`/`mae` cover target points only; observed-point reconstruction error
/// is reported separately as `observed_mse`/`observed_mae`.
pub fn metrics_from_predictions(
    tasks: &[InterpolationTask],
    preds: &[TaskPrediction],
    options: &EvalOptions,
) -> Result<MetricTable> {
    if tasks.len() != preds.len() {
        return Err(NiertError::shape(format!(
            "{} predictions for {} tasks",
            preds.len(),
            tasks.len()
        )));
    }
    let width = options.bin_width.max(1);
    let mut total = Acc::default();
    let mut observed = Acc::default();
    let mut region = Acc::default();
    let mut bins: BTreeMap<usize, (String, Acc)> = BTreeMap::new();
    for (task, p) in tasks.iter().zip(preds) {
        if p.target_pred.len() != task.m() || p.observed_pred.len() != task.n() {
            return Err(NiertError::shape(format!(
                "prediction count mismatch on {}",
                task.source_id
            )));
        }
        let (lo, label) = bin_label(task.n(), width);
        let bin = &mut bins.entry(lo).or_insert_with(|| (label, Acc::default())).1;
        for (j, (yp, yt)) in p.target_pred.iter().zip(&p.target_truth).enumerate() {
            total.add(yp, yt);
            bin.add(yp, yt);
            if let Some(r) = &options.region {
                if r.contains(&task.targets[j].x) {
                    region.add(yp, yt);
                }
            }
        }
        for (yp, yt) in p.observed_pred.iter().zip(&p.observed_truth) {
            observed.add(yp, yt);
        }
    }
    let row = |metric: &str, value: f64, bin: &str| MetricRow {
        metric: metric.into(),
        value,
        bin: bin.into(),
    };
    let mut rows = vec![
        row("mse", total.mse(), "all"),
        row("mae", total.mae(), "all"),
        row("observed_mse", observed.mse(), "all"),
        row("observed_mae", observed.mae(), "all"),
        row("tasks", tasks.len() as f64, "all"),
    ];
    if options.region.is_some() {
        rows.push(row("region_mae", region.mae(), "all"));
    }
    for (label, acc) in bins.values() {
        rows.push(row("mse", acc.mse(), label));
        rows.push(row("mae", acc.mae(), label));
        rows.push(row("targets", acc.count as f64, label));
    }
    Ok(MetricTable { rows })
}

/// Runs `predict` on every task (in parallel) and tabulates the metrics.
///
/// `predict` returns one row per point, observed points first.
pub fn evaluate_with<F>(
    tasks: &[InterpolationTask],
    predict: F,
    options: &EvalOptions,
) -> Result<(MetricTable, Vec<TaskPrediction>)>
where
    F: Fn(&InterpolationTask) -> Result<Vec<Vec<f64>>> + Sync,
{
    let preds = tasks
        .par_iter()
        .map(|t| {
            let rows = predict(t)?;
            if rows.len() != t.n() + t.m() {
                return Err(NiertError::shape(format!(
                    "{} predictions for {} points",
                    rows.len(),
                    t.n() + t.m()
                )));
            }
            let (obs, tgt) = rows.split_at(t.n());
            Ok(TaskPrediction {
                source_id: t.source_id.clone(),
                n: t.n(),
                observed_pred: obs.to_vec(),
                observed_truth: (0..t.n()).map(|i| t.observed_y(i).to_vec()).collect(),
                target_pred: tgt.to_vec(),
                target_truth: t.target_truth.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = metrics_from_predictions(tasks, &preds, options)?;
    Ok((table, preds))
}

/// NIERT predictions for every point of `task`.
pub fn predict_points(
    task: &InterpolationTask,
    params: &ParamSet,
    config: &ModelConfig,
) -> Result<Vec<Vec<f64>>> {
    let out = forward(task, params, config, false)?;
    Ok(out.predictions.row_iter().map(<[f64]>::to_vec).collect())
}

pub fn evaluate(
    params: &ParamSet,
    config: &ModelConfig,
    tasks: &[InterpolationTask],
    options: &EvalOptions,
) -> Result<MetricTable> {
    evaluate_with(tasks, |t| predict_points(t, params, config), options).map(|(m, _)| m)
}

/// Truth fed back as the prediction.
pub fn oracle_predict(task: &InterpolationTask) -> Result<Vec<Vec<f64>>> {
    Ok(task.all_truth())
}

/// Per-task prediction dump, one JSON object per line.
pub fn predictions_to_jsonl(preds: &[TaskPrediction]) -> String {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn predictions_from_jsonl(text: &str) -> Result<Vec<TaskPrediction>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| NiertError::Format {
                path: "<predictions>".into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::ScatteredPoint;

    fn task(n: usize, truth: f64) -> InterpolationTask {
        InterpolationTask {
            observed: (0..n)
                .map(|i| ScatteredPoint::observed(vec![-0.9 + 0.01 * i as f64], vec![truth]))
                .collect(),
            targets: vec![
                ScatteredPoint::target(vec![0.5]),
                ScatteredPoint::target(vec![0.9]),
            ],
            target_truth: vec![vec![truth], vec![truth]],
            d_x: 1,
            d_y: 1,
            source_id: format!("t{n}"),
        }
    }

    #[test]
    fn oracle_is_perfect() {
        let tasks = vec![task(5, 0.3), task(12, 0.7)];
        let (m, _) = evaluate_with(&tasks, oracle_predict, &EvalOptions::default()).unwrap();
        assert!(m.rows.iter().filter(|r| r.metric != "tasks" && r.metric != "targets").all(|r| r.value == 0.0));
    }

    #[test]
    fn zero_predictor_on_unit_truth() {
        let tasks = vec![task(5, 1.0)];
        let zero = |t: &InterpolationTask| Ok(vec![vec![0.0]; t.n() + t.m()]);
        let (m, _) = evaluate_with(&tasks, zero, &EvalOptions::default()).unwrap();
        assert_eq!(m.mse(), 1.0);
        assert_eq!(m.mae(), 1.0);
    }

    #[test]
    fn fixed_n_single_bin() {
        let tasks = vec![task(10, 0.1), task(10, 0.2), task(10, 0.3)];
        let (m, _) = evaluate_with(&tasks, oracle_predict, &EvalOptions::default()).unwrap();
        assert_eq!(m.bins(), vec!["n=10-14".to_string()]);
    }

    #[test]
    fn region_mask_selects_targets() {
        let tasks = vec![task(5, 1.0)];
        let opts = EvalOptions {
            region: Some(Region {
                lo: vec![0.8],
                hi: vec![1.0],
                invert: false,
            }),
            ..EvalOptions::default()
        };
        // error 1 at x=0.5, error 3 at x=0.9
        let pred = |t: &InterpolationTask| {
            let mut rows = vec![vec![1.0]; t.n()];
            rows.push(vec![2.0]);
            rows.push(vec![4.0]);
            Ok(rows)
        };
        let (m, _) = evaluate_with(&tasks, pred, &opts).unwrap();
        assert_eq!(m.get("region_mae", "all"), Some(3.0));
        assert_eq!(m.mae(), 2.0);
    }

    #[test]
    fn csv_and_dump_round_trip() {
        let tasks = vec![task(7, 0.4), task(22, 0.9)];
        let pred = |t: &InterpolationTask| Ok(vec![vec![0.5]; t.n() + t.m()]);
        let (m, preds) = evaluate_with(&tasks, pred, &EvalOptions::default()).unwrap();
        assert_eq!(MetricTable::from_csv(&m.to_csv()).unwrap(), m);
        let back = predictions_from_jsonl(&predictions_to_jsonl(&preds)).unwrap();
        assert_eq!(metrics_from_predictions(&tasks, &back, &EvalOptions::default()).unwrap(), m);
    }
}
