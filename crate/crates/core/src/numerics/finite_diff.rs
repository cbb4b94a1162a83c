use crate::error::{NiertError, Result};

/// Central-difference gradient of `f` at `p` with step `h`.
pub fn finite_diff_grad<F>(mut f: F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(NiertError::InvalidConfig(format!("step must be positive, got {h}")));
    }
    let mut probe = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        probe[i] = p[i] + h;
        let plus = f(&probe);
        probe[i] = p[i] - h;
        let minus = f(&probe);
        probe[i] = p[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NiertError::NonFiniteValue(format!(
                "objective at coordinate {i}: f(+h) = {plus}, f(-h) = {minus}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest relative error between two gradients, with `floor` guarding
/// against division by near-zero magnitudes.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square() {
        let g = finite_diff_grad(|p| p[0] * p[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn product() {
        let g = finite_diff_grad(|p| p[0] * p[1], &[2.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite() {
        let r = finite_diff_grad(|p| (p[0] - 1.0).ln(), &[1.0], 1e-5);
        assert!(matches!(r, Err(NiertError::NonFiniteValue(_))));
    }

    #[test]
    fn bad_step() {
        assert!(finite_diff_grad(|p| p[0], &[0.0], 0.0).is_err());
    }
}
