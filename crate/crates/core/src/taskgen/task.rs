use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};

/// A position in `[-1, 1]^{d_x}` with an optional value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteredPoint {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

impl ScatteredPoint {
    pub fn observed(x: Vec<f64>, y: Vec<f64>) -> Self {
        ScatteredPoint { x, y: Some(y) }
    }

    pub fn target(x: Vec<f64>) -> Self {
        ScatteredPoint { x, y: None }
    }
}

/// One interpolation instance: observed points with values and target
/// points whose values are held out in `target_truth`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationTask {
    pub observed: Vec<ScatteredPoint>,
    pub targets: Vec<ScatteredPoint>,
    pub target_truth: Vec<Vec<f64>>,
    pub d_x: usize,
    pub d_y: usize,
    pub source_id: String,
}

impl InterpolationTask {
    pub fn n(&self) -> usize {
        self.observed.len()
    }

    pub fn m(&self) -> usize {
        self.targets.len()
    }

    pub fn observed_y(&self, i: usize) -> &[f64] {
        self.observed[i]
            .y
            .as_deref()
            .expect("observed point without a value")
    }

    /// Ground truth for every point, observed rows first.
    pub fn all_truth(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.observed_y(i).to_vec())
            .chain(self.target_truth.iter().cloned())
            .collect()
    }

    /// Same observed set with a different target list.
    pub fn with_targets(&self, targets: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> Self {
        InterpolationTask {
            observed: self.observed.clone(),
            targets: targets.into_iter().map(ScatteredPoint::target).collect(),
            target_truth: truth,
            d_x: self.d_x,
            d_y: self.d_y,
            source_id: self.source_id.clone(),
        }
    }

    /// Checks the structural invariants of a task.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NiertError::shape(format!("task {}: {msg}", self.source_id)));
        if self.observed.is_empty() {
            return bad("no observed points".into());
        }
        if self.targets.is_empty() {
            return bad("no target points".into());
        }
        if self.target_truth.len() != self.targets.len() {
            return bad(format!(
                "{} truth rows for {} targets",
                self.target_truth.len(),
                self.targets.len()
            ));
        }
        for p in self.observed.iter().chain(&self.targets) {
            if p.x.len() != self.d_x {
                return bad(format!("point of dimension {} (d_x = {})", p.x.len(), self.d_x));
            }
            if p.x.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
                return bad(format!("position {:?} outside [-1, 1]^d", p.x));
            }
        }
        for p in &self.observed {
            match &p.y {
                Some(y) if y.len() == self.d_y && y.iter().all(|v| v.is_finite()) => {}
                Some(y) => return bad(format!("observed value {y:?} (d_y = {})", self.d_y)),
                None => return bad("observed point without value".into()),
            }
        }
        if self.targets.iter().any(|p| p.y.is_some()) {
            return bad("target point carries a value".into());
        }
        for t in &self.target_truth {
            if t.len() != self.d_y || t.iter().any(|v| !v.is_finite()) {
                return bad(format!("target truth {t:?}"));
            }
        }
        let observed_x: HashSet<Vec<u64>> = self.observed.iter().map(|p| bits(&p.x)).collect();
        if self.targets.iter().any(|p| observed_x.contains(&bits(&p.x))) {
            return bad("target position duplicates an observed position".into());
        }
        Ok(())
    }
}

pub(crate) fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> InterpolationTask {
        InterpolationTask {
            observed: vec![ScatteredPoint::observed(vec![0.1], vec![1.0])],
            targets: vec![ScatteredPoint::target(vec![0.2])],
            target_truth: vec![vec![2.0]],
            d_x: 1,
            d_y: 1,
            source_id: "t".into(),
        }
    }

    #[test]
    fn valid_task() {
        task().validate().unwrap();
    }

    #[test]
    fn invariant_violations() {
        let mut t = task();
        t.targets[0].x = vec![0.1];
        assert!(t.validate().is_err());

        let mut t = task();
        t.target_truth[0] = vec![f64::NAN];
        assert!(t.validate().is_err());

        let mut t = task();
        t.observed[0].x = vec![1.5];
        assert!(t.validate().is_err());

        let mut t = task();
        t.targets.clear();
        t.target_truth.clear();
        assert!(t.validate().is_err());
    }
}
