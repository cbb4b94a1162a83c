use crate::error::{NiertError, Result};
use crate::numerics::Matrix;

/// Pivots smaller than this abort the elimination.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// LU factors of `A + ridge·I` with the row permutation of partial pivoting.
#[derive(Clone, Debug)]
pub struct LuFactors {
    lu: Matrix,
    perm: Vec<usize>,
}

/// Factors `A + ridge·I` by Gaussian elimination with partial pivoting.
pub fn lu_factor(a: &Matrix, ridge: f64) -> Result<LuFactors> {
    let n = a.rows();
    if a.cols() != n {
        return Err(NiertError::shape(format!(
            "linear_solve needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(NiertError::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
    }

    let mut lu = a.clone();
    for i in 0..n {
        lu[(i, i)] += ridge;
    }
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, lu[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs < PIVOT_TOLERANCE {
            return Err(NiertError::SingularSystem {
                column: col,
                pivot: pivot_abs,
            });
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = lu[(col, c)];
                lu[(col, c)] = lu[(pivot_row, c)];
                lu[(pivot_row, c)] = tmp;
            }
            perm.swap(col, pivot_row);
        }
        let pivot = lu[(col, col)];
        for r in col + 1..n {
            let factor = lu[(r, col)] / pivot;
            lu[(r, col)] = factor;
            if factor == 0.0 {
                continue;
            }
            for c in col + 1..n {
                lu[(r, c)] -= factor * lu[(col, c)];
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(NiertError::shape(format!(
                "rhs of length {} for a {n}x{n} system",
                b.len()
            )));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[(r, c)] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[(r, c)] * x[c];
            }
            x[r] = acc / self.lu[(r, r)];
        }
        Ok(x)
    }
}

/// Solves `(A + ridge·I) x = b` by Gaussian elimination with partial
/// pivoting.
pub fn linear_solve(a: &Matrix, b: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(NiertError::shape(format!(
            "rhs of length {} for a {}x{} system",
            b.len(),
            a.rows(),
            a.cols()
        )));
    }
    lu_factor(a, ridge)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let x = linear_solve(&Matrix::identity(2), &[3.0, -1.0], 0.0).unwrap();
        assert_eq!(x, vec![3.0, -1.0]);
    }

    #[test]
    fn diagonal_system() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(linear_solve(&a, &[2.0, 8.0], 0.0).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            linear_solve(&a, &[1.0, 1.0], 0.0),
            Err(NiertError::SingularSystem { .. })
        ));
    }

    #[test]
    fn ridge_regularizes() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let x = linear_solve(&a, &[1.0, 1.0], 1.0).unwrap();
        // (A + I) x = b  =>  x = [1/3, 1/3]
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((x[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn needs_pivoting() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(linear_solve(&a, &[2.0, 3.0], 0.0).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn shape_errors() {
        assert!(linear_solve(&Matrix::zeros(2, 3), &[0.0, 0.0], 0.0).is_err());
        assert!(linear_solve(&Matrix::identity(2), &[0.0], 0.0).is_err());
    }
}
