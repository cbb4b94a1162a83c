use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::model::ModelConfig;
use crate::numerics::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)` with `fan_in = rows`.
    Uniform,
    Zeros,
    Ones,
}

/// Tensor names, shapes and initializers in canonical order.
pub(crate) fn layout(c: &ModelConfig) -> Vec<(String, (usize, usize), Init)> {
    let mut out = Vec::new();
    let linear = |out: &mut Vec<_>, name: &str, fan_in: usize, fan_out: usize| {
        out.push((format!("{name}.weight"), (fan_in, fan_out), Init::Uniform));
        out.push((format!("{name}.bias"), (1, fan_out), Init::Zeros));
    };
    linear(&mut out, "embed.x", c.d_x, c.d_xemb);
    linear(&mut out, "embed.y", c.d_y, c.d_yemb);
    out.push(("embed.mask_y".into(), (1, c.d_yemb), Init::Zeros));
    linear(&mut out, "embed.in", c.d_xemb + c.d_yemb, c.d_model);
    for l in 0..c.num_layers {
        for p in ["q", "k", "v", "o"] {
            linear(&mut out, &format!("layers.{l}.attn.{p}"), c.d_model, c.d_model);
        }
        out.push((format!("layers.{l}.norm1.gain"), (1, c.d_model), Init::Ones));
        out.push((format!("layers.{l}.norm1.bias"), (1, c.d_model), Init::Zeros));
        linear(&mut out, &format!("layers.{l}.ffn.1"), c.d_model, c.d_ff);
        linear(&mut out, &format!("layers.{l}.ffn.2"), c.d_ff, c.d_model);
        out.push((format!("layers.{l}.norm2.gain"), (1, c.d_model), Init::Ones));
        out.push((format!("layers.{l}.norm2.bias"), (1, c.d_model), Init::Zeros));
    }
    linear(&mut out, "head.1", c.d_model, c.d_ff);
    linear(&mut out, "head.2", c.d_ff, c.d_y);
    out
}

/// Tensors of the embedding stage, by position in [`ParamSet::tensors`].
pub(crate) const EMBED_X_W: usize = 0;
pub(crate) const EMBED_X_B: usize = 1;
pub(crate) const EMBED_Y_W: usize = 2;
pub(crate) const EMBED_Y_B: usize = 3;
pub(crate) const MASK_Y: usize = 4;
pub(crate) const EMBED_IN_W: usize = 5;
pub(crate) const EMBED_IN_B: usize = 6;
pub(crate) const EMBED_TENSORS: usize = 7;
pub(crate) const LAYER_TENSORS: usize = 16;

/// Offsets of one transformer layer's tensors.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerSlots {
    pub q: (usize, usize),
    pub k: (usize, usize),
    pub v: (usize, usize),
    pub o: (usize, usize),
    pub norm1: (usize, usize),
    pub ffn1: (usize, usize),
    pub ffn2: (usize, usize),
    pub norm2: (usize, usize),
}

pub(crate) fn layer_slots(layer: usize) -> LayerSlots {
    let b = EMBED_TENSORS + layer * LAYER_TENSORS;
    LayerSlots {
        q: (b, b + 1),
        k: (b + 2, b + 3),
        v: (b + 4, b + 5),
        o: (b + 6, b + 7),
        norm1: (b + 8, b + 9),
        ffn1: (b + 10, b + 11),
        ffn2: (b + 12, b + 13),
        norm2: (b + 14, b + 15),
    }
}

pub(crate) fn head_slots(c: &ModelConfig) -> [usize; 4] {
    let b = EMBED_TENSORS + c.num_layers * LAYER_TENSORS;
    [b, b + 1, b + 2, b + 3]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub value: Matrix,
}

/// Every trainable tensor of the network, in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub tensors: Vec<NamedTensor>,
}

impl ParamSet {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors
            .iter_mut()
            .find(|t| t.name == name)
            .map(|t| &mut t.value)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for t in &self.tensors {
            out.extend_from_slice(t.value.as_slice());
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(NiertError::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let len = t.value.len();
            t.value.as_mut_slice().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.value.is_finite())
    }

    /// Checks names and shapes against the layout implied by `config`.
    pub fn check_matches(&self, config: &ModelConfig) -> Result<()> {
        let expected = layout(config);
        if expected.len() != self.tensors.len() {
            return Err(NiertError::CheckpointMismatch(format!(
                "{} tensors, config implies {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape, _), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.value.shape() {
                return Err(NiertError::CheckpointMismatch(format!(
                    "tensor {} {:?}, config implies {name} {shape:?}",
                    t.name,
                    t.value.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Fresh parameters: uniform weights scaled by `1/√fan_in`, zero biases,
/// zero mask token, unit layer-norm gains.
pub fn init_params(config: &ModelConfig, rng: &mut RngStream) -> Result<ParamSet> {
    config.validate()?;
    let tensors = layout(config)
        .into_iter()
        .map(|(name, (rows, cols), init)| {
            let value = match init {
                Init::Zeros => Matrix::zeros(rows, cols),
                Init::Ones => Matrix::filled(rows, cols, 1.0),
                Init::Uniform => {
                    let a = 1.0 / (rows as f64).sqrt();
                    let data = (0..rows * cols).map(|_| rng.uniform(-a, a)).collect();
                    Matrix::from_raw(rows, cols, data)
                }
            };
            NamedTensor { name, value }
        })
        .collect();
    Ok(ParamSet { tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_init() {
        let c = ModelConfig::sized(2, 1, 2, 16, 2);
        let a = init_params(&c, &mut RngStream::new(4, 0)).unwrap();
        let b = init_params(&c, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(a, b);
        a.check_matches(&c).unwrap();
    }

    #[test]
    fn slot_constants_match_layout() {
        let c = ModelConfig::sized(2, 1, 3, 16, 2);
        let names: Vec<String> = layout(&c).into_iter().map(|(n, _, _)| n).collect();
        assert_eq!(names[MASK_Y], "embed.mask_y");
        assert_eq!(names[EMBED_IN_B], "embed.in.bias");
        let s = layer_slots(2);
        assert_eq!(names[s.q.0], "layers.2.attn.q.weight");
        assert_eq!(names[s.norm2.1], "layers.2.norm2.bias");
        assert_eq!(names[head_slots(&c)[3]], "head.2.bias");
        assert_eq!(names.len(), head_slots(&c)[3] + 1);
    }

    #[test]
    fn init_conventions() {
        let c = ModelConfig::sized(1, 1, 1, 64, 4);
        let p = init_params(&c, &mut RngStream::new(0, 0)).unwrap();
        assert!(p.get("embed.mask_y").unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(p.get("layers.0.norm1.gain").unwrap().as_slice().iter().all(|&v| v == 1.0));
        assert!(p.get("layers.0.attn.q.bias").unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_scale_moments() {
        // 64x64 weight: U(-1/8, 1/8) has std 1/sqrt(3*64).
        let c = ModelConfig::sized(1, 1, 3, 64, 4);
        let p = init_params(&c, &mut RngStream::new(8, 0)).unwrap();
        let mut samples = Vec::new();
        for l in 0..3 {
            for name in ["q", "k", "v"] {
                let w = p.get(&format!("layers.{l}.attn.{name}.weight")).unwrap();
                samples.extend_from_slice(w.as_slice());
            }
        }
        assert!(samples.len() >= 10_000);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        let expected = 1.0 / (3.0f64 * 64.0).sqrt();
        assert!((var.sqrt() - expected).abs() < 0.1 * expected);
        assert!(samples.iter().all(|v| v.abs() <= 0.125));
    }

    #[test]
    fn flat_round_trip_and_mismatch() {
        let c = ModelConfig::sized(1, 1, 1, 8, 2);
        let mut p = init_params(&c, &mut RngStream::new(1, 0)).unwrap();
        let flat = p.flatten();
        let q = p.clone();
        p.assign_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(p.assign_flat(&flat[1..]).is_err());
        let other = ModelConfig::sized(1, 1, 2, 8, 2);
        assert!(matches!(p.check_matches(&other), Err(NiertError::CheckpointMismatch(_))));
    }
}
