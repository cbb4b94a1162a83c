use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::numerics::compensated::{dot2, two_sum};
use crate::numerics::{lu_factor, Matrix};
use crate::taskgen::InterpolationTask;

/// Multiquadric shape used when none is given. Small against typical center
/// spacing in `[-1, 1]^d`, which keeps the kernel matrix far from its
/// ill-conditioned flat limit.
pub const DEFAULT_SHAPE: f64 = 0.01;

/// Multiquadric kernel `sqrt(r² + c²)`.
#[inline]
pub fn multiquadric(a: &[f64], b: &[f64], shape_c: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (r2 + shape_c * shape_c).sqrt()
}

/// Refinement sweeps after the initial solve.
const REFINE_STEPS: usize = 4;

/// A fitted multiquadric interpolant `f(x) = Σ_j λ_j φ(x, x_j)`.
///
/// Each weight is held as an unevaluated sum `coefficients + coefficients_lo`
/// so that strongly cancelling weights still reproduce the node values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    pub centers: Vec<Vec<f64>>,
    /// `coefficients[j][k]`: weight of center `j` for output channel `k`.
    pub coefficients: Vec<Vec<f64>>,
    #[serde(default)]
    pub coefficients_lo: Vec<Vec<f64>>,
    pub shape_c: f64,
    pub ridge: f64,
}

/// Kernel matrix `Φ_ij = φ(x_i, x_j)`.
pub fn kernel_matrix(centers: &[Vec<f64>], shape_c: f64) -> Matrix {
    let n = centers.len();
    let mut phi = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            phi[(i, j)] = multiquadric(&centers[i], &centers[j], shape_c);
        }
    }
    phi
}

/// `y - (Φ + ridge·I)(hi + lo)` in compensated arithmetic.
fn residual(phi: &Matrix, ridge: f64, y: &[f64], hi: &[f64], lo: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let row = phi.row(i);
            let terms = row
                .iter()
                .zip(hi)
                .chain(row.iter().zip(lo))
                .map(|(p, l)| (-p, *l))
                .chain([(-ridge, hi[i]), (-ridge, lo[i])]);
            dot2(y[i], terms)
        })
        .collect()
}

/// Solves `(Φ + ridge·I) λ = Y` channel by channel, refining each solution
/// against residuals computed in extended precision.
pub fn rbf_fit(
    centers: &[Vec<f64>],
    values: &[Vec<f64>],
    shape_c: f64,
    ridge: f64,
) -> Result<RbfModel> {
    if centers.is_empty() || centers.len() != values.len() {
        return Err(NiertError::shape(format!(
            "rbf_fit with {} centers and {} values",
            centers.len(),
            values.len()
        )));
    }
    if !(shape_c > 0.0) {
        return Err(NiertError::InvalidConfig(format!("shape_c must be > 0, got {shape_c}")));
    }
    let d_y = values[0].len();
    if values.iter().any(|v| v.len() != d_y) {
        return Err(NiertError::shape("ragged rbf values"));
    }
    let phi = kernel_matrix(centers, shape_c);
    let lu = lu_factor(&phi, ridge)?;
    let n = centers.len();
    let mut coefficients = vec![vec![0.0; d_y]; n];
    let mut coefficients_lo = vec![vec![0.0; d_y]; n];
    for k in 0..d_y {
        let rhs: Vec<f64> = values.iter().map(|v| v[k]).collect();
        let mut hi = lu.solve(&rhs)?;
        let mut lo = vec![0.0; n];
        let mut best = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let r = residual(&phi, ridge, &rhs, &hi, &lo);
            let size = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if size == 0.0 || size >= best {
                break;
            }
            best = size;
            for ((h, l), d) in hi.iter_mut().zip(lo.iter_mut()).zip(lu.solve(&r)?) {
                let (s, e) = two_sum(*h, d);
                let (s, e) = two_sum(s, e + *l);
                *h = s;
                *l = e;
            }
        }
        if hi.iter().chain(&lo).any(|v| !v.is_finite()) {
            return Err(NiertError::NonFiniteValue("rbf coefficients".into()));
        }
        for j in 0..n {
            coefficients[j][k] = hi[j];
            coefficients_lo[j][k] = lo[j];
        }
    }
    Ok(RbfModel {
        centers: centers.to_vec(),
        coefficients,
        coefficients_lo,
        shape_c,
        ridge,
    })
}

/// Fits on the observed points of `task`.
pub fn rbf_fit_task(task: &InterpolationTask, shape_c: f64, ridge: f64) -> Result<RbfModel> {
    let centers: Vec<Vec<f64>> = task.observed.iter().map(|p| p.x.clone()).collect();
    let values: Vec<Vec<f64>> = (0..task.n()).map(|i| task.observed_y(i).to_vec()).collect();
    rbf_fit(&centers, &values, shape_c, ridge)
}

impl RbfModel {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d_x = self.centers[0].len();
        if x.len() != d_x {
            return Err(NiertError::shape(format!(
                "query of dimension {} for {d_x}-dimensional centers",
                x.len()
            )));
        }
        let d_y = self.coefficients[0].len();
        let phi: Vec<f64> = self.centers.iter().map(|c| multiquadric(x, c, self.shape_c)).collect();
        let lo = |j: usize, k: usize| self.coefficients_lo.get(j).map_or(0.0, |r| r[k]);
        Ok((0..d_y)
            .map(|k| {
                let hi = phi.iter().zip(&self.coefficients).map(|(p, l)| (*p, l[k]));
                let low = phi.iter().enumerate().map(|(j, p)| (*p, lo(j, k)));
                dot2(0.0, hi.chain(low))
            })
            .collect())
    }
}

pub fn rbf_eval(model: &RbfModel, x: &[f64]) -> Result<Vec<f64>> {
    model.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linear_solve;

    #[test]
    fn single_point() {
        let m = rbf_fit(&[vec![0.3]], &[vec![2.5]], 1.0, 0.0).unwrap();
        assert!((m.eval(&[0.3]).unwrap()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn unit_center_unit_weight() {
        let m = RbfModel {
            centers: vec![vec![0.0, 0.0]],
            coefficients: vec![vec![1.0]],
            coefficients_lo: vec![],
            shape_c: 1.0,
            ridge: 0.0,
        };
        assert_eq!(rbf_eval(&m, &[0.0, 0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn three_points_hand_system() {
        let centers = [vec![-1.0], vec![0.0], vec![1.0]];
        let values = [vec![0.0], vec![1.0], vec![0.0]];
        let m = rbf_fit(&centers, &values, 1.0, 0.0).unwrap();
        // Φ = [[1, √2, √5], [√2, 1, √2], [√5, √2, 1]]
        let (s2, s5) = (2f64.sqrt(), 5f64.sqrt());
        let phi = Matrix::from_rows(&[vec![1.0, s2, s5], vec![s2, 1.0, s2], vec![s5, s2, 1.0]]).unwrap();
        let lambda = linear_solve(&phi, &[0.0, 1.0, 0.0], 0.0).unwrap();
        for (row, l) in m.coefficients.iter().zip(&lambda) {
            assert!((row[0] - l).abs() < 1e-14);
        }
        // symmetric data gives symmetric coefficients
        assert!((lambda[0] - lambda[2]).abs() < 1e-14);
        for (c, v) in centers.iter().zip(&values) {
            assert!((m.eval(c).unwrap()[0] - v[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn near_coincident_centers_still_interpolate() {
        // Gap of 1e-7 between the first two centers: the weights cancel at
        // ~1e12 and a plain f64 solve misses the nodes by ~1e-4.
        let centers: Vec<Vec<f64>> = [-0.5, -0.5 + 1e-7, 0.1, 0.4, 0.9].iter().map(|&x| vec![x]).collect();
        let values: Vec<Vec<f64>> = [0.2, -0.7, 0.5, 0.1, -0.3].iter().map(|&y| vec![y]).collect();
        let m = rbf_fit(&centers, &values, DEFAULT_SHAPE, 0.0).unwrap();
        for (c, v) in centers.iter().zip(&values) {
            assert!((m.eval(c).unwrap()[0] - v[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_center_singular() {
        let r = rbf_fit(&[vec![0.5], vec![0.5]], &[vec![1.0], vec![2.0]], 1.0, 0.0);
        assert!(matches!(r, Err(NiertError::SingularSystem { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let m = rbf_fit(&[vec![0.5, 0.1]], &[vec![1.0]], 1.0, 0.0).unwrap();
        assert!(matches!(m.eval(&[0.5]), Err(NiertError::ShapeMismatch(_))));
    }

    #[test]
    fn rejects_bad_shape() {
        assert!(rbf_fit(&[vec![0.0]], &[vec![1.0]], 0.0, 0.0).is_err());
    }
}
