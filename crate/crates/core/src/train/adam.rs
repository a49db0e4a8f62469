use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        AdamState {
            config,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
        }
    }

    pub fn for_model(config: AdamConfig, params: &ModelParams) -> Self {
        let flat = params.flatten();
        let shapes: Vec<&[usize]> = flat.iter().map(|(_, t)| t.shape()).collect();
        Self::new(config, &shapes)
    }

    fn update(&mut self, i: usize, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m[i].shape() {
            return Err(Error::shape("adam", param.shape(), grad.shape()));
        }
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
        for (j, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adam", &[self.m.len()], &[params.len(), grads.len()]));
        }
        self.t += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g)?;
        }
        Ok(())
    }

    /// `grads` in the canonical parameter order of [`ModelParams::flatten`].
    pub fn step_model(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::shape("adam", &[self.m.len()], &[grads.len()]));
        }
        self.t += 1;
        let mut i = 0;
        let mut result = Ok(());
        params.visit_mut(&mut |_, p| {
            if result.is_ok() {
                result = self.update(i, p, &grads[i]);
            }
            i += 1;
        });
        result
    }
}
