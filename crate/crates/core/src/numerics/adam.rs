use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};

/// Learning-rate and moment hyper-parameters for [`AdamState`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub decay_rate: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5.0e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_rate: 0.97,
        }
    }
}

/// Optimizer state owned by one trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_rate: f64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(NiertError::InvalidConfig(format!(
                "adam betas must lie in [0, 1), got {} and {}",
                config.beta1, config.beta2
            )));
        }
        Ok(AdamState {
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            lr: config.lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            decay_rate: config.decay_rate,
        })
    }

    /// Applies one epoch of learning-rate decay.
    pub fn decay(&mut self) {
        self.lr *= self.decay_rate;
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || state.m.len() != state.v.len()
    {
        return Err(NiertError::shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (state.beta1, state.beta2);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(n: usize) -> AdamState {
        AdamState::new(
            n,
            AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
        )
        .unwrap()
    }

    /// Hand evaluation of the Adam recurrences for a scalar parameter.
    fn reference(grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut p, mut m, mut v) = (0.0, 0.0, 0.0);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.5, -2.0, 0.25];
        let mut s = state(3);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![1.5, -2.0, 0.25]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0];
        let mut s = state(1);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((p[0] + 0.1).abs() < 1e-8);
        assert_eq!(p[0], reference(&[1.0], 0.1));
    }

    #[test]
    fn two_steps_match_hand_evaluation() {
        let mut p = vec![0.0];
        let mut s = state(1);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // Constant gradient keeps m_hat = v_hat = 1 at step 2 as well.
        assert!((p[0] + 0.2).abs() < 1e-8);
        assert!((p[0] - reference(&[1.0, 1.0], 0.1)).abs() < 1e-15);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn deterministic() {
        let grads = [0.3, -1.2, 4.0];
        let run = || {
            let mut p = vec![0.1, 0.2, 0.3];
            let mut s = state(3);
            for _ in 0..5 {
                adam_step(&mut p, &grads, &mut s).unwrap();
            }
            p.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0; 2];
        let mut s = state(2);
        assert!(matches!(
            adam_step(&mut p, &[1.0], &mut s),
            Err(NiertError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn rejects_bad_betas() {
        let cfg = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(1, cfg).is_err());
    }

    #[test]
    fn decay_scales_lr() {
        let mut s = state(1);
        s.decay_rate = 0.5;
        s.decay();
        assert_eq!(s.lr, 0.05);
    }
}
