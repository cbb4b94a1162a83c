use serde::{Deserialize, Serialize};

use crate::error::{NiertError, Result};
use crate::numerics::ErrorNorm;

/// Which keys a query may attend to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// Every query attends to observed points only.
    #[default]
    Partial,
    /// Ordinary self-attention over observed and target points.
    Vanilla,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_xemb: usize,
    pub d_yemb: usize,
    pub d_ff: usize,
    pub d_x: usize,
    pub d_y: usize,
    #[serde(default)]
    pub loss_norm: ErrorNorm,
    #[serde(default)]
    pub attention: AttentionMode,
}

impl ModelConfig {
    /// Desk-scale default: 3 layers, width 64, 4 heads.
    pub fn desk(d_x: usize, d_y: usize) -> Self {
        Self::sized(d_x, d_y, 3, 64, 4)
    }

    /// `d_xemb = 16·d_x`, `d_yemb = 16`, `d_ff = 4·d_model`.
    pub fn sized(d_x: usize, d_y: usize, num_layers: usize, d_model: usize, num_heads: usize) -> Self {
        ModelConfig {
            num_layers,
            d_model,
            num_heads,
            d_xemb: 16 * d_x,
            d_yemb: 16,
            d_ff: 4 * d_model,
            d_x,
            d_y,
            loss_norm: ErrorNorm::L2,
            attention: AttentionMode::Partial,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("num_layers", self.num_layers),
            ("d_model", self.d_model),
            ("num_heads", self.num_heads),
            ("d_xemb", self.d_xemb),
            ("d_yemb", self.d_yemb),
            ("d_ff", self.d_ff),
            ("d_x", self.d_x),
            ("d_y", self.d_y),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, v)| *v == 0) {
            return Err(NiertError::InvalidConfig(format!("{name} must be >= 1")));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(NiertError::InvalidConfig(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.num_heads
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_width() {
        let c = ModelConfig::sized(1, 1, 3, 64, 4);
        assert_eq!(c.head_dim(), 16);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::desk(2, 1);
        c.num_heads = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(2, 1);
        c.d_ff = 0;
        assert!(c.validate().is_err());
    }
}
