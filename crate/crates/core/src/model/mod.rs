//! The self-attention activity classifier.
//!
//! Pipeline per window: sensor-modality attention, pointwise embedding with
//! `√d` scaling and sinusoidal positions, a stack of self-attention blocks,
//! global temporal attention, and a fully connected classifier.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::ModelConfig;
pub use layers::{
    embed_and_encode, forward_graph, global_temporal_attention, positional_encoding, self_attention_block, sensor_attention,
    ForwardNodes, ForwardOptions,
};
pub use params::{init_params, BlockParams, HeadParams, Linear, ModelParams, SensorAttentionParams, TemporalAttentionParams};

use crate::error::Result;
use crate::numerics::{ops, Graph, Rng, Tensor, Var};

/// Attention weights captured during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionArtifacts {
    /// `T×S`; each row is a distribution over sensors.
    pub sensor_scores: Tensor,
    /// Length `T`; a distribution over time-steps.
    pub temporal_alpha: Tensor,
    /// Per block, per head `T×T` maps, when requested.
    pub per_head_maps: Option<Vec<Vec<Tensor>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarModel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Output of [`HarModel::forward`].
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Length `C`.
    pub logits: Tensor,
    pub artifacts: AttentionArtifacts,
}

impl Prediction {
    pub fn probabilities(&self) -> Tensor {
        ops::softmax(&self.logits, 0).expect("finite logits")
    }

    pub fn class(&self) -> usize {
        argmax(self.logits.data())
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

impl HarModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, &mut Rng::new(seed))?;
        Ok(HarModel { config, params })
    }

    /// Places every parameter on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> ModelParams<Var> {
        self.params.map(&mut |_, t| g.leaf(t.clone()))
    }

    pub fn forward(&self, x: &Tensor, rng: &mut Rng, training: bool) -> Result<Prediction> {
        self.forward_with(x, rng, training, &ForwardOptions::default(), false)
    }

    /// Inference-mode forward pass (no dropout).
    pub fn infer(&self, x: &Tensor) -> Result<Prediction> {
        self.forward(x, &mut Rng::new(0), false)
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.infer(x)?.class())
    }

    pub fn forward_with(&self, x: &Tensor, rng: &mut Rng, training: bool, opts: &ForwardOptions, keep_head_maps: bool) -> Result<Prediction> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let input = g.leaf(x.clone());
        let nodes = forward_graph(&mut g, input, &p, &self.config, rng, training, opts)?;
        Ok(collect_prediction(&g, &nodes, keep_head_maps))
    }
}

pub(crate) fn collect_prediction(g: &Graph, nodes: &ForwardNodes, keep_head_maps: bool) -> Prediction {
    let per_head_maps = keep_head_maps.then(|| {
        nodes
            .head_maps
            .iter()
            .map(|maps| maps.iter().map(|&m| g.value(m).clone()).collect())
            .collect()
    });
    let logits = g.value(nodes.logits);
    let alpha = g.value(nodes.alpha);
    Prediction {
        logits: Tensor::vector(logits.data().to_vec()),
        artifacts: AttentionArtifacts {
            sensor_scores: g.value(nodes.sensor_scores).clone(),
            temporal_alpha: Tensor::vector(alpha.data().to_vec()),
            per_head_maps,
        },
    }
}
