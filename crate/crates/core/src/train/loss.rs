use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

fn check_target(logits: &Tensor, target: usize) -> Result<()> {
    if target >= logits.len() {
        return Err(Error::Data(format!("target class {target} outside 0..{}", logits.len())));
    }
    Ok(())
}

fn weight_of(weights: Option<&[f64]>, target: usize) -> f64 {
    weights.map_or(1.0, |w| w[target])
}

/// `−w_target · log softmax(logits)[target]` via log-sum-exp.
pub fn cross_entropy(logits: &Tensor, target: usize, weights: Option<&[f64]>) -> Result<f64> {
    check_target(logits, target)?;
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(weight_of(weights, target) * (lse - z[target]))
}

/// `w_target · (softmax(logits) − onehot(target))`.
pub fn cross_entropy_grad(logits: &Tensor, target: usize, weights: Option<&[f64]>) -> Result<Tensor> {
    check_target(logits, target)?;
    let mut p = ops::softmax(logits, 0)?;
    p.data_mut()[target] -= 1.0;
    let w = weight_of(weights, target);
    Ok(if w == 1.0 { p } else { ops::scale(&p, w) })
}

/// Inverse-frequency weights `N / (C·n_c)`; absent classes get 0.
pub fn inverse_frequency_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let c = counts.len() as f64;
    counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { total as f64 / (c * n as f64) })
        .collect()
}
