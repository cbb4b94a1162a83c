use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::numerics::RngStream;
use crate::taskgen::expr::{sample_expression, ExprNode};
use crate::taskgen::gaussian::{sample_gaussian_sum, GaussianSumFunction, DEFAULT_COMPONENTS};
use crate::taskgen::task::{bits, InterpolationTask, ScatteredPoint};

/// Consecutive invalid attempts tolerated before a function is abandoned.
pub const MAX_ATTEMPTS: usize = 100;
/// Minimum value range on the probe points for a usable function.
pub const MIN_RANGE: f64 = 1e-9;
/// Minimum fraction of probe points with finite values.
pub const MIN_FINITE_FRACTION: f64 = 0.9;

/// An expression rescaled to `[0, 1]` on its probe points and multiplied by a
/// random factor in `[0.9, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedExpression {
    pub expr: ExprNode,
    pub offset: f64,
    pub range: f64,
    pub factor: f64,
}

impl CalibratedExpression {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.expr.eval(x) - self.offset) / self.range * self.factor
    }
}

/// A ground-truth function `X → Y` (scalar-valued for both families).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampledFunction {
    Expression(CalibratedExpression),
    GaussianSum(GaussianSumFunction),
}

impl SampledFunction {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        vec![match self {
            SampledFunction::Expression(e) => e.eval(x),
            SampledFunction::GaussianSum(g) => g.eval(x),
        }]
    }

    pub fn d_y(&self) -> usize {
        1
    }
}

/// Rescales `expr` so its finite probe values span `[0, 1]`, then multiplies
/// by a draw from `U(0.9, 1)`.
pub fn normalize_function(
    expr: &ExprNode,
    probe: &[Vec<f64>],
    rng: &mut RngStream,
) -> Result<CalibratedExpression> {
    let factor = rng.uniform(0.9, 1.0);
    normalize_with_factor(expr, probe, factor)
}

pub fn normalize_with_factor(
    expr: &ExprNode,
    probe: &[Vec<f64>],
    factor: f64,
) -> Result<CalibratedExpression> {
    let values: Vec<f64> = probe.iter().map(|x| expr.eval(x)).collect();
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if probe.is_empty() || (finite.len() as f64) < MIN_FINITE_FRACTION * probe.len() as f64 {
        return Err(NiertError::NonFiniteValue(format!(
            "{} of {} probe values finite for {expr}",
            finite.len(),
            probe.len()
        )));
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range >= MIN_RANGE) || !range.is_finite() {
        return Err(NiertError::DegenerateFunction { range });
    }
    Ok(CalibratedExpression {
        expr: expr.clone(),
        offset: lo,
        range,
        factor,
    })
}

/// `count` uniform points in `[-1, 1]^{d_x}` with no repeated position.
pub fn sample_points(count: usize, d_x: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut seen = HashSet::with_capacity(count);
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let x: Vec<f64> = (0..d_x).map(|_| rng.uniform(-1.0, 1.0)).collect();
        if seen.insert(bits(&x)) {
            points.push(x);
        }
    }
    points
}

/// Splits evaluated points into `n ~ U{lo..hi}` observed and the rest targets.
pub fn split_task(
    points: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    n_range: (usize, usize),
    d_y: usize,
    source_id: String,
    rng: &mut RngStream,
) -> InterpolationTask {
    let d_x = points.first().map_or(0, Vec::len);
    let n = rng.int_inclusive(n_range.0, n_range.1);
    let mut observed = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(points.len() - n);
    let mut truth = Vec::with_capacity(points.len() - n);
    for (i, (x, y)) in points.into_iter().zip(values).enumerate() {
        if i < n {
            observed.push(ScatteredPoint::observed(x, y));
        } else {
            targets.push(ScatteredPoint::target(x));
            truth.push(y);
        }
    }
    InterpolationTask {
        observed,
        targets,
        target_truth: truth,
        d_x,
        d_y,
        source_id,
    }
}

fn check_split(total: usize, n_range: (usize, usize)) -> Result<()> {
    if n_range.0 < 1 || n_range.0 > n_range.1 || total <= n_range.1 {
        return Err(NiertError::InvalidConfig(format!(
            "need 1 <= lo <= hi < N, got n_range {n_range:?} with N = {total}"
        )));
    }
    Ok(())
}

/// Scatters `total` points over the domain, evaluates `f` and splits them.
///
/// Attempts with any non-finite value are discarded and redrawn.
pub fn sample_task(
    f: &SampledFunction,
    total: usize,
    n_range: (usize, usize),
    d_x: usize,
    source_id: &str,
    rng: &mut RngStream,
) -> Result<InterpolationTask> {
    check_split(total, n_range)?;
    for _ in 0..MAX_ATTEMPTS {
        let points = sample_points(total, d_x, rng);
        let values: Vec<Vec<f64>> = points.iter().map(|x| f.eval(x)).collect();
        if values.iter().flatten().all(|v| v.is_finite()) {
            return Ok(split_task(points, values, n_range, f.d_y(), source_id.to_string(), rng));
        }
    }
    Err(NiertError::RejectedFunction {
        attempts: MAX_ATTEMPTS,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Random expressions over `+ × − ·² ·³ exp sin cos`.
    Expr,
    /// Sums of Gaussian bumps.
    Gaussian {
        #[serde(default)]
        sigma_base: Option<f64>,
        #[serde(default = "default_components")]
        components: usize,
    },
}

fn default_components() -> usize {
    DEFAULT_COMPONENTS
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Expr => "expr",
            Family::Gaussian { .. } => "gaussian",
        }
    }
}

/// Everything needed to regenerate a stream of tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGenConfig {
    pub family: Family,
    pub d_x: usize,
    /// Total scattered points `N` per task.
    pub total_points: usize,
    /// Inclusive range of the observed-point count `n`.
    pub n_range: (usize, usize),
    pub seed: u64,
    pub stream: u64,
    /// Skeleton keys that must not be generated (train/test separation).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub exclude_skeletons: BTreeSet<String>,
}

impl TaskGenConfig {
    /// Expression-family defaults: 256 points in 1D, 512 above, `n ∈ [5, 50]`.
    pub fn expr(d_x: usize, seed: u64) -> Self {
        TaskGenConfig {
            family: Family::Expr,
            d_x,
            total_points: if d_x == 1 { 256 } else { 512 },
            n_range: (5, 50),
            seed,
            stream: 0,
            exclude_skeletons: BTreeSet::new(),
        }
    }

    /// Gaussian-sum defaults: 64 observed and 192 target points.
    pub fn gaussian(d_x: usize, sigma_base: Option<f64>, seed: u64) -> Self {
        TaskGenConfig {
            family: Family::Gaussian {
                sigma_base,
                components: DEFAULT_COMPONENTS,
            },
            d_x,
            total_points: 256,
            n_range: (64, 64),
            seed,
            stream: 0,
            exclude_skeletons: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 {
            return Err(NiertError::InvalidConfig("d_x must be >= 1".into()));
        }
        check_split(self.total_points, self.n_range)?;
        if let Family::Gaussian { sigma_base, .. } = &self.family {
            if sigma_base.is_none() && super::gaussian::default_sigma_base(self.d_x).is_none() {
                return Err(NiertError::InvalidConfig(format!(
                    "gaussian family at d_x = {} needs sigma_base",
                    self.d_x
                )));
            }
        }
        Ok(())
    }

    fn root(&self) -> RngStream {
        RngStream::new(self.seed, self.stream)
    }
}

/// A generated task together with its function and bookkeeping.
#[derive(Clone, Debug)]
pub struct GeneratedTask {
    pub task: InterpolationTask,
    pub function: SampledFunction,
    /// Functions discarded before this one was accepted.
    pub rejected: usize,
}

/// Generates task `index` of the stream described by `config`.
///
/// Depends only on `(seed, stream, index)`, so tasks may be produced in any
/// order or in parallel.
pub fn generate_task(config: &TaskGenConfig, index: u64) -> Result<GeneratedTask> {
    let mut rng = config.root().derive(index);
    let source_id = format!(
        "{}-d{}-s{}-t{}-i{index}",
        config.family.name(),
        config.d_x,
        config.seed,
        config.stream
    );
    let mut rejected = 0;
    for _ in 0..MAX_ATTEMPTS {
        let attempt = match &config.family {
            Family::Expr => expression_attempt(config, &source_id, &mut rng),
            Family::Gaussian {
                sigma_base,
                components,
            } => sample_gaussian_sum(config.d_x, *sigma_base, *components, &mut rng).and_then(|g| {
                let f = SampledFunction::GaussianSum(g);
                let task = sample_task(
                    &f,
                    config.total_points,
                    config.n_range,
                    config.d_x,
                    &source_id,
                    &mut rng,
                )?;
                Ok((task, f))
            }),
        };
        match attempt {
            Ok((task, function)) => {
                return Ok(GeneratedTask {
                    task,
                    function,
                    rejected,
                })
            }
            Err(
                NiertError::DegenerateFunction { .. }
                | NiertError::NonFiniteValue(_)
                | NiertError::RejectedFunction { .. },
            ) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    Err(NiertError::RejectedFunction {
        attempts: MAX_ATTEMPTS,
    })
}

fn expression_attempt(
    config: &TaskGenConfig,
    source_id: &str,
    rng: &mut RngStream,
) -> Result<(InterpolationTask, SampledFunction)> {
    let skeleton = sample_expression(config.d_x, rng);
    if config.exclude_skeletons.contains(&skeleton.skeleton_key()) {
        return Err(NiertError::DegenerateFunction { range: 0.0 });
    }
    let expr = skeleton.realize(rng);
    // The task's own support doubles as the normalization probe.
    let points = sample_points(config.total_points, config.d_x, rng);
    let calibrated = normalize_function(&expr, &points, rng)?;
    let f = SampledFunction::Expression(calibrated);
    let values: Vec<Vec<f64>> = points.iter().map(|x| f.eval(x)).collect();
    if !values.iter().flatten().all(|v| v.is_finite()) {
        return Err(NiertError::NonFiniteValue(format!("task values of {expr}")));
    }
    let task = split_task(points, values, config.n_range, 1, source_id.to_string(), rng);
    Ok((task, f))
}

/// Summary of a batch generation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub count: usize,
    pub rejected: usize,
}

impl GenSummary {
    pub fn rejection_rate(&self) -> f64 {
        let total = self.count + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.rejected as f64 / total as f64
        }
    }
}

/// Generates tasks `first..first + count` in parallel.
pub fn generate_tasks(
    config: &TaskGenConfig,
    first: u64,
    count: usize,
) -> Result<(Vec<GeneratedTask>, GenSummary)> {
    config.validate()?;
    let tasks = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_task(config, first + i))
        .collect::<Result<Vec<_>>>()?;
    let summary = GenSummary {
        count: tasks.len(),
        rejected: tasks.iter().map(|t| t.rejected).sum(),
    };
    Ok((tasks, summary))
}

/// Distinct skeleton keys from `count` expression samples of `config`'s
/// stream, used to hold test skeletons out of training.
pub fn sample_skeleton_keys(config: &TaskGenConfig, count: usize) -> BTreeSet<String> {
    let mut rng = config.root().derive(u64::MAX);
    (0..count)
        .map(|_| sample_expression(config.d_x, &mut rng).skeleton_key())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::expr::ExprKind;

    #[test]
    fn affine_endpoints() {
        // f(x) = 4x + 2 spans [2, 6] on the probe {-1, 1}.
        let f = ExprNode::binary(
            ExprKind::Add,
            ExprNode::binary(ExprKind::Mul, ExprNode::constant(2.0), ExprNode::variable(0)),
            ExprNode::constant(4.0),
        );
        let probe = vec![vec![-1.0], vec![1.0]];
        let c = normalize_with_factor(&f, &probe, 1.0).unwrap();
        assert_eq!(c.eval(&[-1.0]), 0.0);
        assert_eq!(c.eval(&[1.0]), 1.0);
        assert_eq!(c.offset, 2.0);
        assert_eq!(c.range, 4.0);
    }

    #[test]
    fn identity_scaled() {
        let probe = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let c = normalize_with_factor(&ExprNode::variable(0), &probe, 0.9).unwrap();
        let vals: Vec<f64> = probe.iter().map(|x| c.eval(x)).collect();
        assert_eq!(vals, vec![0.0, 0.45, 0.9]);
    }

    #[test]
    fn constant_is_degenerate() {
        let probe = vec![vec![-1.0], vec![1.0]];
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            normalize_function(&ExprNode::constant(3.0), &probe, &mut rng),
            Err(NiertError::DegenerateFunction { .. })
        ));
    }

    #[test]
    fn forced_split() {
        let f = SampledFunction::GaussianSum(GaussianSumFunction {
            components: vec![],
        });
        let mut rng = RngStream::new(0, 0);
        let t = sample_task(&f, 8, (5, 5), 2, "forced", &mut rng).unwrap();
        assert_eq!(t.n(), 5);
        assert_eq!(t.m(), 3);
        t.validate().unwrap();
    }

    #[test]
    fn always_invalid_function_is_rejected() {
        let expr = ExprNode::unary(ExprKind::Exp, ExprNode::constant(1000.0));
        let f = SampledFunction::Expression(CalibratedExpression {
            expr,
            offset: 0.0,
            range: 1.0,
            factor: 1.0,
        });
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            sample_task(&f, 8, (2, 4), 1, "bad", &mut rng),
            Err(NiertError::RejectedFunction { attempts: 100 })
        ));
    }

    #[test]
    fn bad_split_config() {
        let mut cfg = TaskGenConfig::expr(1, 0);
        cfg.total_points = 50;
        assert!(cfg.validate().is_err());
        cfg.total_points = 51;
        cfg.validate().unwrap();
    }

    #[test]
    fn paper_defaults() {
        let e1 = TaskGenConfig::expr(1, 0);
        assert_eq!((e1.total_points, e1.n_range), (256, (5, 50)));
        assert_eq!(TaskGenConfig::expr(3, 0).total_points, 512);
        let g = TaskGenConfig::gaussian(30, None, 0);
        assert_eq!(g.total_points - g.n_range.0, 192);
        assert_eq!(g.n_range, (64, 64));
    }

    #[test]
    fn generated_tasks_are_valid_and_in_range() {
        let cfg = TaskGenConfig::expr(2, 11);
        let (tasks, summary) = generate_tasks(&cfg, 0, 40).unwrap();
        assert_eq!(summary.count, 40);
        for g in &tasks {
            g.task.validate().unwrap();
            assert_eq!(g.task.n() + g.task.m(), 512);
            for i in 0..g.task.n() {
                let y = g.task.observed_y(i)[0];
                assert!((0.0..=1.0).contains(&y));
            }
        }
    }

    #[test]
    fn excluded_skeletons_never_appear() {
        let mut cfg = TaskGenConfig::expr(1, 5);
        cfg.total_points = 32;
        cfg.n_range = (5, 10);
        let held_out = sample_skeleton_keys(&cfg, 150);
        cfg.exclude_skeletons = held_out.clone();
        let (tasks, _) = generate_tasks(&cfg, 0, 200).unwrap();
        for g in tasks {
            let SampledFunction::Expression(e) = g.function else { unreachable!() };
            assert!(!held_out.contains(&e.expr.skeleton_key()));
        }
    }

    #[test]
    fn generation_is_order_independent() {
        let cfg = TaskGenConfig::gaussian(10, None, 3);
        let (all, _) = generate_tasks(&cfg, 0, 6).unwrap();
        let single = generate_task(&cfg, 4).unwrap();
        assert_eq!(all[4].task, single.task);
    }
}
