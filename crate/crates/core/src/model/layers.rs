//! Forward pass recorded on a [`Graph`], stage by stage.

use super::config::ModelConfig;
use super::params::{BlockParams, ModelParams, SensorAttentionParams, TemporalAttentionParams};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Rng, Tensor, Var};

/// Sinusoidal position table: `PE[t, 2i] = sin(t / 10000^(2i/d))`,
/// `PE[t, 2i+1] = cos(t / 10000^(2i/d))`.
pub fn positional_encoding(len: usize, d: usize) -> Result<Tensor> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::Config(format!("positional encoding needs an even size, got {d}")));
    }
    if len == 0 {
        return Err(Error::Config("positional encoding needs at least one position".into()));
    }
    let mut pe = Tensor::zeros(&[len, d]);
    let data = pe.data_mut();
    for t in 0..len {
        for i in 0..d / 2 {
            let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[t * d + 2 * i] = angle.sin();
            data[t * d + 2 * i + 1] = angle.cos();
        }
    }
    Ok(pe)
}

/// Knobs used by tests and interpretability tooling.
#[derive(Clone, Debug, Default)]
pub struct ForwardOptions {
    /// Replace the positional encoding with zeros.
    pub zero_positional_encoding: bool,
    /// Sensors whose attention logits are forced to −∞.
    pub masked_sensors: Vec<usize>,
}

/// Handles to the intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardNodes {
    pub input: Var,
    pub sensor_scores: Var,
    pub weighted: Var,
    pub encoded: Var,
    pub block_outputs: Vec<Var>,
    /// Per block, per head: the `T×T` attention matrix.
    pub head_maps: Vec<Vec<Var>>,
    pub alpha: Var,
    pub context: Var,
    pub logits: Var,
}

/// Sensor-modality attention. The window is treated as a one-channel
/// `T×S` image: `k` same-padded filters, a 1×1 projection back to one
/// channel, then a softmax over sensors at every time-step. Returns
/// `(x ⊙ scores, scores)`.
pub fn sensor_attention(g: &mut Graph, x: Var, p: &SensorAttentionParams<Var>, masked: &[usize]) -> Result<(Var, Var)> {
    let (t, s) = g.value(x).dims2("sensor_attention")?;
    let image = g.reshape(x, &[t, s, 1])?;
    let features = g.conv2d_same(image, p.conv_w, p.conv_b)?;
    let projected = g.conv2d_same(features, p.proj_w, p.proj_b)?;
    let mut logits = g.reshape(projected, &[t, s])?;
    if !masked.is_empty() {
        if let Some(&bad) = masked.iter().find(|&&k| k >= s) {
            return Err(Error::Config(format!("masked sensor {bad} out of range 0..{s}")));
        }
        let mask = Tensor::from_fn(&[t, s], |i| if masked.contains(&(i % s)) { f64::NEG_INFINITY } else { 0.0 });
        logits = g.add_const(logits, &mask)?;
    }
    let scores = g.softmax(logits, 1)?;
    let weighted = g.mul(x, scores)?;
    Ok((weighted, scores))
}

/// Pointwise embedding to `d`, scaling by `√d`, adding the position table,
/// then dropout.
#[allow(clippy::too_many_arguments)]
pub fn embed_and_encode(
    g: &mut Graph,
    weighted: Var,
    embed_w: Var,
    embed_b: Var,
    pe: &Tensor,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<Var> {
    let e = g.conv1d_pointwise(weighted, embed_w, embed_b)?;
    let d = g.value(e).shape()[1];
    let scaled = g.scale(e, (d as f64).sqrt());
    let encoded = g.add_const(scaled, pe)?;
    g.dropout(encoded, rate, rng, training)
}

/// One encoder block: multi-head scaled dot-product self-attention and a
/// position-wise feed-forward layer, each wrapped as `LN(x + dropout(f(x)))`.
/// Returns the block output and each head's attention matrix.
pub fn self_attention_block(
    g: &mut Graph,
    x: Var,
    p: &BlockParams<Var>,
    cfg: &ModelConfig,
    rng: &mut Rng,
    training: bool,
) -> Result<(Var, Vec<Var>)> {
    let mut heads = Vec::with_capacity(p.heads.len());
    let mut maps = Vec::with_capacity(p.heads.len());
    for h in &p.heads {
        let q = g.matmul(x, h.w_q)?;
        let k = g.matmul(x, h.w_k)?;
        let v = g.matmul(x, h.w_v)?;
        let dk = g.value(q).shape()[1];
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let scaled = g.scale(scores, 1.0 / (dk as f64).sqrt());
        let attn = g.softmax(scaled, 1)?;
        heads.push(g.matmul(attn, v)?);
        maps.push(attn);
    }
    let concat = g.concat_cols(&heads)?;
    let mha = g.matmul(concat, p.w_o)?;
    let mha = g.dropout(mha, cfg.dropout, rng, training)?;
    let res1 = g.add(x, mha)?;
    let h1 = g.layer_norm(res1, p.ln1_gain, p.ln1_bias, cfg.eps_ln)?;

    let f1 = g.conv1d_pointwise(h1, p.ffn_w1, p.ffn_b1)?;
    let f1 = g.relu(f1);
    let f2 = g.conv1d_pointwise(f1, p.ffn_w2, p.ffn_b2)?;
    let f2 = g.dropout(f2, cfg.dropout, rng, training)?;
    let res2 = g.add(h1, f2)?;
    let out = g.layer_norm(res2, p.ln2_gain, p.ln2_bias, cfg.eps_ln)?;
    Ok((out, maps))
}

/// Learned pooling over time: `g_t = tanh(s_t·W_ga + b_ga)`,
/// `α = softmax_t(g_t·g_s)`, `c = Σ_t α_t s_t`. Returns `(c, α)` with `c`
/// as `1×d` and `α` as `T×1`.
pub fn global_temporal_attention(g: &mut Graph, seq: Var, p: &TemporalAttentionParams<Var>) -> Result<(Var, Var)> {
    let hidden = g.conv1d_pointwise(seq, p.w_ga, p.b_ga)?;
    let hidden = g.tanh(hidden);
    let d = g.value(p.g_s).len();
    let gs = g.reshape(p.g_s, &[d, 1])?;
    let logits = g.matmul(hidden, gs)?;
    let alpha = g.softmax(logits, 0)?;
    let alpha_t = g.transpose(alpha)?;
    let context = g.matmul(alpha_t, seq)?;
    Ok((context, alpha))
}

/// Records the whole model on `g`, from a `T×S` window to `1×C` logits.
pub fn forward_graph(
    g: &mut Graph,
    x: Var,
    p: &ModelParams<Var>,
    cfg: &ModelConfig,
    rng: &mut Rng,
    training: bool,
    opts: &ForwardOptions,
) -> Result<ForwardNodes> {
    let shape = g.value(x).shape();
    if shape != [cfg.window_len, cfg.channels] {
        return Err(Error::shape("forward", shape, &[cfg.window_len, cfg.channels]));
    }
    let (weighted, sensor_scores) = sensor_attention(g, x, &p.sensor_attn, &opts.masked_sensors)?;
    let pe = if opts.zero_positional_encoding {
        Tensor::zeros(&[cfg.window_len, cfg.d_model])
    } else {
        positional_encoding(cfg.window_len, cfg.d_model)?
    };
    let encoded = embed_and_encode(g, weighted, p.embed_w, p.embed_b, &pe, cfg.dropout, rng, training)?;
    let mut h = encoded;
    let mut block_outputs = Vec::with_capacity(p.blocks.len());
    let mut head_maps = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        let (out, maps) = self_attention_block(g, h, block, cfg, rng, training)?;
        block_outputs.push(out);
        head_maps.push(maps);
        h = out;
    }
    let (context, alpha) = global_temporal_attention(g, h, &p.temporal)?;
    let mut z = context;
    for (i, layer) in p.head.iter().enumerate() {
        z = g.dropout(z, cfg.dropout, rng, training)?;
        z = g.conv1d_pointwise(z, layer.w, layer.b)?;
        if i + 1 < p.head.len() {
            z = g.relu(z);
        }
    }
    Ok(ForwardNodes {
        input: x,
        sensor_scores,
        weighted,
        encoded,
        block_outputs,
        head_maps,
        alpha,
        context,
        logits: z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates() {
        let pe = positional_encoding(4, 8).unwrap();
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((pe.at2(1, 0) - 1f64.sin()).abs() < 1e-15);
        assert!((pe.at2(1, 0) - 0.841_47).abs() < 1e-5);
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn odd_size_rejected() {
        assert!(matches!(positional_encoding(3, 5), Err(Error::Config(_))));
    }
}
