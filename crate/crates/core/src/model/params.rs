//! Learnable weights.
//!
//! The containers are generic over the element type so the same layout holds
//! tensors, gradients, or tape handles ([`crate::numerics::Var`]). Field order
//! is fixed by `map` and `visit_mut`, which must list fields identically.

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

type MapFn<'a, T, U> = &'a mut dyn FnMut(&str, &T) -> U;
type VisitFn<'a, T> = &'a mut dyn FnMut(&str, &mut T);

#[derive(Clone, Debug, PartialEq)]
pub struct SensorAttentionParams<T = Tensor> {
    /// `kh×kw×1×k`
    pub conv_w: T,
    pub conv_b: T,
    /// `1×1×k×1`
    pub proj_w: T,
    pub proj_b: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T = Tensor> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T = Tensor> {
    pub heads: Vec<HeadParams<T>>,
    /// `(n·d_k)×d`
    pub w_o: T,
    pub ln1_gain: T,
    pub ln1_bias: T,
    pub ffn_w1: T,
    pub ffn_b1: T,
    pub ffn_w2: T,
    pub ffn_b2: T,
    pub ln2_gain: T,
    pub ln2_bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalAttentionParams<T = Tensor> {
    /// Applied to row vectors: `g = tanh(s·W_ga + b_ga)`.
    pub w_ga: T,
    pub b_ga: T,
    /// Context vector, length d.
    pub g_s: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T = Tensor> {
    pub w: T,
    pub b: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub sensor_attn: SensorAttentionParams<T>,
    pub embed_w: T,
    pub embed_b: T,
    pub blocks: Vec<BlockParams<T>>,
    pub temporal: TemporalAttentionParams<T>,
    /// Classifier layers; the last one maps to the class logits.
    pub head: Vec<Linear<T>>,
}

impl<T> SensorAttentionParams<T> {
    fn map<U>(&self, p: &str, f: MapFn<T, U>) -> SensorAttentionParams<U> {
        SensorAttentionParams {
            conv_w: f(&format!("{p}.conv_w"), &self.conv_w),
            conv_b: f(&format!("{p}.conv_b"), &self.conv_b),
            proj_w: f(&format!("{p}.proj_w"), &self.proj_w),
            proj_b: f(&format!("{p}.proj_b"), &self.proj_b),
        }
    }

    fn visit_mut(&mut self, p: &str, f: VisitFn<T>) {
        f(&format!("{p}.conv_w"), &mut self.conv_w);
        f(&format!("{p}.conv_b"), &mut self.conv_b);
        f(&format!("{p}.proj_w"), &mut self.proj_w);
        f(&format!("{p}.proj_b"), &mut self.proj_b);
    }
}

impl<T> BlockParams<T> {
    fn map<U>(&self, p: &str, f: MapFn<T, U>) -> BlockParams<U> {
        BlockParams {
            heads: self
                .heads
                .iter()
                .enumerate()
                .map(|(j, h)| HeadParams {
                    w_q: f(&format!("{p}.head{j}.w_q"), &h.w_q),
                    w_k: f(&format!("{p}.head{j}.w_k"), &h.w_k),
                    w_v: f(&format!("{p}.head{j}.w_v"), &h.w_v),
                })
                .collect(),
            w_o: f(&format!("{p}.w_o"), &self.w_o),
            ln1_gain: f(&format!("{p}.ln1_gain"), &self.ln1_gain),
            ln1_bias: f(&format!("{p}.ln1_bias"), &self.ln1_bias),
            ffn_w1: f(&format!("{p}.ffn_w1"), &self.ffn_w1),
            ffn_b1: f(&format!("{p}.ffn_b1"), &self.ffn_b1),
            ffn_w2: f(&format!("{p}.ffn_w2"), &self.ffn_w2),
            ffn_b2: f(&format!("{p}.ffn_b2"), &self.ffn_b2),
            ln2_gain: f(&format!("{p}.ln2_gain"), &self.ln2_gain),
            ln2_bias: f(&format!("{p}.ln2_bias"), &self.ln2_bias),
        }
    }

    fn visit_mut(&mut self, p: &str, f: VisitFn<T>) {
        for (j, h) in self.heads.iter_mut().enumerate() {
            f(&format!("{p}.head{j}.w_q"), &mut h.w_q);
            f(&format!("{p}.head{j}.w_k"), &mut h.w_k);
            f(&format!("{p}.head{j}.w_v"), &mut h.w_v);
        }
        f(&format!("{p}.w_o"), &mut self.w_o);
        f(&format!("{p}.ln1_gain"), &mut self.ln1_gain);
        f(&format!("{p}.ln1_bias"), &mut self.ln1_bias);
        f(&format!("{p}.ffn_w1"), &mut self.ffn_w1);
        f(&format!("{p}.ffn_b1"), &mut self.ffn_b1);
        f(&format!("{p}.ffn_w2"), &mut self.ffn_w2);
        f(&format!("{p}.ffn_b2"), &mut self.ffn_b2);
        f(&format!("{p}.ln2_gain"), &mut self.ln2_gain);
        f(&format!("{p}.ln2_bias"), &mut self.ln2_bias);
    }
}

impl<T> ModelParams<T> {
    /// Applies `f` to every parameter in canonical order, keeping the layout.
    pub fn map<U>(&self, f: &mut dyn FnMut(&str, &T) -> U) -> ModelParams<U> {
        ModelParams {
            sensor_attn: self.sensor_attn.map("sensor_attn", f),
            embed_w: f("embed_w", &self.embed_w),
            embed_b: f("embed_b", &self.embed_b),
            blocks: self.blocks.iter().enumerate().map(|(i, b)| b.map(&format!("block{i}"), f)).collect(),
            temporal: TemporalAttentionParams {
                w_ga: f("temporal.w_ga", &self.temporal.w_ga),
                b_ga: f("temporal.b_ga", &self.temporal.b_ga),
                g_s: f("temporal.g_s", &self.temporal.g_s),
            },
            head: self
                .head
                .iter()
                .enumerate()
                .map(|(i, l)| Linear {
                    w: f(&format!("fc{i}.w"), &l.w),
                    b: f(&format!("fc{i}.b"), &l.b),
                })
                .collect(),
        }
    }

    /// Visits every parameter mutably in the same order as [`ModelParams::map`].
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut T)) {
        self.sensor_attn.visit_mut("sensor_attn", f);
        f("embed_w", &mut self.embed_w);
        f("embed_b", &mut self.embed_b);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("block{i}"), f);
        }
        f("temporal.w_ga", &mut self.temporal.w_ga);
        f("temporal.b_ga", &mut self.temporal.b_ga);
        f("temporal.g_s", &mut self.temporal.g_s);
        for (i, l) in self.head.iter_mut().enumerate() {
            f(&format!("fc{i}.w"), &mut l.w);
            f(&format!("fc{i}.b"), &mut l.b);
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.map(&mut |n, _| names.push(n.to_string()));
        names
    }
}

impl<T: Clone> ModelParams<T> {
    pub fn flatten(&self) -> Vec<(String, T)> {
        let mut out = Vec::new();
        self.map(&mut |n, t| out.push((n.to_string(), t.clone())));
        out
    }
}

impl ModelParams {
    pub fn zeros_like(&self) -> ModelParams {
        self.map(&mut |_, t| Tensor::zeros(t.shape()))
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.map(&mut |_, t| n += t.len());
        n
    }

    /// Replaces every tensor from a flat named list in canonical order.
    pub fn load_flat(&mut self, flat: Vec<(String, Tensor)>) -> Result<()> {
        let expected = self.names();
        if flat.len() != expected.len() {
            return Err(Error::Integrity(format!("expected {} tensors, found {}", expected.len(), flat.len())));
        }
        let mut items = flat.into_iter();
        let mut failure = None;
        self.visit_mut(&mut |name, slot| {
            let (n, t) = items.next().expect("length checked");
            if failure.is_none() && (n != name || t.shape() != slot.shape()) {
                failure = Some(format!("tensor {n} {:?} does not fit slot {name} {:?}", t.shape(), slot.shape()));
            }
            *slot = t;
        });
        match failure {
            Some(msg) => Err(Error::Integrity(msg)),
            None => Ok(()),
        }
    }
}

fn xavier(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.uniform_range(-bound, bound))
}

/// Xavier-uniform weights, zero biases, unit layer-norm gains.
pub fn init_params(cfg: &ModelConfig, rng: &mut Rng) -> Result<ModelParams> {
    cfg.validate()?;
    let (d, dk, k) = (cfg.d_model, cfg.d_k(), cfg.k_filters);
    let [kh, kw] = cfg.sa_kernel;
    let ffn = cfg.ffn_width();
    let sensor_attn = SensorAttentionParams {
        conv_w: xavier(&[kh, kw, 1, k], kh * kw, kh * kw * k, rng),
        conv_b: Tensor::zeros(&[k]),
        proj_w: xavier(&[1, 1, k, 1], k, 1, rng),
        proj_b: Tensor::zeros(&[1]),
    };
    let embed_w = xavier(&[cfg.channels, d], cfg.channels, d, rng);
    let blocks = (0..cfg.n_blocks)
        .map(|_| BlockParams {
            heads: (0..cfg.n_heads)
                .map(|_| HeadParams {
                    w_q: xavier(&[d, dk], d, dk, rng),
                    w_k: xavier(&[d, dk], d, dk, rng),
                    w_v: xavier(&[d, dk], d, dk, rng),
                })
                .collect(),
            w_o: xavier(&[cfg.n_heads * dk, d], cfg.n_heads * dk, d, rng),
            ln1_gain: Tensor::ones(&[d]),
            ln1_bias: Tensor::zeros(&[d]),
            ffn_w1: xavier(&[d, ffn], d, ffn, rng),
            ffn_b1: Tensor::zeros(&[ffn]),
            ffn_w2: xavier(&[ffn, d], ffn, d, rng),
            ffn_b2: Tensor::zeros(&[d]),
            ln2_gain: Tensor::ones(&[d]),
            ln2_bias: Tensor::zeros(&[d]),
        })
        .collect();
    let temporal = TemporalAttentionParams {
        w_ga: xavier(&[d, d], d, d, rng),
        b_ga: Tensor::zeros(&[d]),
        g_s: xavier(&[d], d, d, rng),
    };
    let mut widths = vec![d];
    widths.extend(&cfg.fc_hidden);
    widths.push(cfg.classes);
    let head = widths
        .windows(2)
        .map(|w| Linear {
            w: xavier(&[w[0], w[1]], w[0], w[1], rng),
            b: Tensor::zeros(&[w[1]]),
        })
        .collect();
    Ok(ModelParams {
        sensor_attn,
        embed_w,
        embed_b: Tensor::zeros(&[d]),
        blocks,
        temporal,
        head,
    })
}
