use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length T in samples.
    pub window_len: usize,
    /// Sensor channel count S.
    pub channels: usize,
    /// Class count C.
    pub classes: usize,
    /// Embedding size d.
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    /// Position-wise feed-forward width; `None` means `4·d`.
    pub ffn_dim: Option<usize>,
    /// Filters k of the sensor-attention convolution.
    pub k_filters: usize,
    /// Sensor-attention kernel extents `[time, sensor]`, both odd.
    pub sa_kernel: [usize; 2],
    pub dropout: f64,
    pub eps_ln: f64,
    /// Hidden widths of the classifier head before the final d→C layer.
    pub fc_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window_len: 33,
            channels: 1,
            classes: 2,
            d_model: 128,
            n_blocks: 2,
            n_heads: 4,
            ffn_dim: None,
            k_filters: 16,
            sa_kernel: [3, 3],
            dropout: 0.2,
            eps_ln: 1e-5,
            fc_hidden: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_width(&self) -> usize {
        self.ffn_dim.unwrap_or(4 * self.d_model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.window_len == 0 || self.channels == 0 || self.classes == 0 {
            return bad("window_len, channels and classes must be positive".into());
        }
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            return bad(format!("d_model must be positive and even, got {}", self.d_model));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.k_filters == 0 || self.ffn_width() == 0 || self.fc_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.sa_kernel.iter().any(|k| k % 2 == 0) {
            return bad(format!("sensor-attention kernel extents must be odd, got {:?}", self.sa_kernel));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.eps_ln > 0.0) {
            return bad("eps_ln must be positive".into());
        }
        Ok(())
    }

    /// Names of the fields whose values differ from `other`.
    pub fn diff(&self, other: &ModelConfig) -> Vec<String> {
        let a = serde_json::to_value(self).expect("config serialises");
        let b = serde_json::to_value(other).expect("config serialises");
        let (Some(a), Some(b)) = (a.as_object(), b.as_object()) else { unreachable!() };
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect()
    }
}
