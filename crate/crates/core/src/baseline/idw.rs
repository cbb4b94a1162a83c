use crate::taskgen::InterpolationTask;

pub const DEFAULT_POWER: f64 = 2.0;

/// Shepard inverse-distance weighting with weights `‖x − x_j‖^{−power}`.
///
/// A query that coincides with an observed position returns that value.
pub fn idw_eval(positions: &[Vec<f64>], values: &[Vec<f64>], x: &[f64], power: f64) -> Vec<f64> {
    let d_y = values.first().map_or(0, Vec::len);
    let mut num = vec![0.0; d_y];
    let mut den = 0.0;
    for (p, v) in positions.iter().zip(values) {
        let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 == 0.0 {
            return v.clone();
        }
        let w = d2.powf(-0.5 * power);
        den += w;
        for (n, y) in num.iter_mut().zip(v) {
            *n += w * y;
        }
    }
    num.into_iter().map(|n| n / den).collect()
}

/// IDW prediction at every target of `task`.
pub fn idw_predict_task(task: &InterpolationTask, power: f64) -> Vec<Vec<f64>> {
    let positions: Vec<Vec<f64>> = task.observed.iter().map(|p| p.x.clone()).collect();
    let values: Vec<Vec<f64>> = (0..task.n()).map(|i| task.observed_y(i).to_vec()).collect();
    task.targets
        .iter()
        .map(|t| idw_eval(&positions, &values, &t.x, power))
        .collect()
}
