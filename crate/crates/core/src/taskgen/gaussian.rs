use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::numerics::RngStream;

pub const DEFAULT_COMPONENTS: usize = 5;

/// One bump `amplitude · exp(−½‖x − center‖² / sigma²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSumFunction {
    pub components: Vec<GaussianComponent>,
}

impl GaussianSumFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let d2: f64 = x.iter().zip(&c.center).map(|(a, b)| (a - b) * (a - b)).sum();
                c.amplitude * (-0.5 * d2 / (c.sigma * c.sigma)).exp()
            })
            .sum()
    }
}

/// Width base `σ_d` for the high-dimensional presets (d = 10, 20, 30).
pub fn default_sigma_base(d_x: usize) -> Option<f64> {
    match d_x {
        10 => Some(1.0),
        20 => Some(2.0),
        30 => Some(4.0),
        _ => None,
    }
}

/// Samples `components` Gaussians with centers in `[-1, 1]^{d_x}`,
/// amplitudes in `[-1, 1]` and widths in `[σ_d, 2σ_d]`.
///
/// `sigma_base` overrides the preset; it is required for dimensions without
/// one.
pub fn sample_gaussian_sum(
    d_x: usize,
    sigma_base: Option<f64>,
    components: usize,
    rng: &mut RngStream,
) -> Result<GaussianSumFunction> {
    let base = sigma_base.or_else(|| default_sigma_base(d_x)).ok_or_else(|| {
        NiertError::InvalidConfig(format!("no width preset for d_x = {d_x}; pass sigma_base"))
    })?;
    if !(base > 0.0) || d_x == 0 {
        return Err(NiertError::InvalidConfig(format!(
            "gaussian sum needs d_x >= 1 and sigma_base > 0 (got {d_x}, {base})"
        )));
    }
    let components = (0..components)
        .map(|_| {
            let center = (0..d_x).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let amplitude = rng.uniform(-1.0, 1.0);
            let sigma = rng.uniform(base, 2.0 * base);
            GaussianComponent {
                amplitude,
                center,
                sigma,
            }
        })
        .collect();
    Ok(GaussianSumFunction { components })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_value() {
        let f = GaussianSumFunction {
            components: vec![GaussianComponent {
                amplitude: 0.7,
                center: vec![0.2, -0.4],
                sigma: 0.5,
            }],
        };
        assert_eq!(f.eval(&[0.2, -0.4]), 0.7);
    }

    #[test]
    fn widths_follow_presets() {
        let mut rng = RngStream::new(1, 2);
        for (d, lo) in [(10, 1.0), (20, 2.0), (30, 4.0)] {
            for _ in 0..50 {
                let f = sample_gaussian_sum(d, None, DEFAULT_COMPONENTS, &mut rng).unwrap();
                assert_eq!(f.components.len(), 5);
                for c in &f.components {
                    assert!(c.sigma >= lo && c.sigma <= 2.0 * lo);
                    assert!(c.amplitude.abs() <= 1.0);
                    assert_eq!(c.center.len(), d);
                }
            }
        }
    }

    #[test]
    fn unknown_dimension_needs_base() {
        let mut rng = RngStream::new(1, 2);
        assert!(sample_gaussian_sum(3, None, 5, &mut rng).is_err());
        assert!(sample_gaussian_sum(3, Some(0.3), 5, &mut rng).is_ok());
    }

    #[test]
    fn matches_direct_summation_far_from_centers() {
        let mut rng = RngStream::new(9, 9);
        let f = sample_gaussian_sum(2, Some(0.05), 5, &mut rng).unwrap();
        let x = [1.0, 1.0];
        let mut direct = 0.0;
        for c in &f.components {
            let d2 = (x[0] - c.center[0]).powi(2) + (x[1] - c.center[1]).powi(2);
            let term = c.amplitude * (-0.5 * d2 / c.sigma.powi(2)).exp();
            assert!(term.abs() <= c.amplitude.abs() * (-0.5 * d2 / c.sigma.powi(2)).exp() + 1e-300);
            direct += term;
        }
        assert_eq!(f.eval(&x), direct);
    }
}
