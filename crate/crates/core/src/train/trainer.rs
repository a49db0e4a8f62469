use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{cross_entropy, cross_entropy_grad, inverse_frequency_weights};
use crate::data::{make_windows, make_windows_with_stride, Labeling, NullPolicy, RawRecording, WindowedDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate_recordings, ConfusionMatrix, Protocol};
use crate::model::{forward_graph, ForwardOptions, HarModel};
use crate::numerics::{rng::derive_seed, Graph, Rng, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Stride-1 windows labelled by their last sample.
    #[default]
    SampleWise,
    /// Overlapping windows labelled by majority.
    WindowWise,
}

impl TrainMode {
    pub fn protocol(self) -> Protocol {
        match self {
            TrainMode::SampleWise => Protocol::SampleWise,
            TrainMode::WindowWise => Protocol::WindowWise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub class_weighting: bool,
    /// Global-norm gradient clipping threshold.
    pub clip_norm: Option<f64>,
    pub optimizer: AdamConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            mode: TrainMode::SampleWise,
            class_weighting: false,
            clip_norm: None,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.epsilon > 0.0) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

/// Builds the training windows for `mode` from several recordings.
pub fn training_windows(
    recordings: &[RawRecording],
    window_len: usize,
    mode: TrainMode,
    overlap: f64,
    labeling: Labeling,
    null_policy: NullPolicy,
) -> Result<WindowedDataset> {
    let channels = recordings.first().map_or(0, RawRecording::channel_count);
    let mut all = WindowedDataset::empty(window_len, channels);
    for rec in recordings {
        if rec.len() < window_len {
            continue;
        }
        let ds = match mode {
            TrainMode::SampleWise => make_windows_with_stride(rec, window_len, 1, Labeling::LastSample, null_policy)?,
            TrainMode::WindowWise => make_windows(rec, window_len, overlap, labeling, null_policy)?,
        };
        all.extend(&ds)?;
    }
    Ok(all)
}

/// What model selection is scored on after each epoch.
#[derive(Clone, Copy, Debug)]
pub enum Validation<'a> {
    /// Held-out recordings, scored in both protocols.
    Recordings(&'a [RawRecording]),
    /// Fixed windows, scored one prediction per window.
    Windows(&'a WindowedDataset),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1_sample: Option<f64>,
    pub val_f1_window: Option<f64>,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_f1_sample,val_f1_window,wall_time";

impl History {
    pub fn to_csv(&self) -> String {
        self.csv(true)
    }

    /// Same columns with `wall_time` left empty, so equal runs give equal bytes.
    pub fn to_csv_untimed(&self) -> String {
        self.csv(false)
    }

    fn csv(&self, timed: bool) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.epochs {
            let time = if timed { format!("{:.3}", r.wall_time) } else { String::new() };
            let _ = writeln!(out, "{},{},{},{},{time}", r.epoch, r.train_loss, opt(r.val_f1_sample), opt(r.val_f1_window));
        }
        out
    }

    /// True when both runs visited the same losses and scores, ignoring timing.
    pub fn same_trajectory(&self, other: &History) -> bool {
        let key = |r: &EpochRecord| {
            (
                r.epoch,
                r.train_loss.to_bits(),
                r.val_f1_sample.map(f64::to_bits),
                r.val_f1_window.map(f64::to_bits),
            )
        };
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| key(a) == key(b))
            && self.best_epoch == other.best_epoch
            && self.best_score.to_bits() == other.best_score.to_bits()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The model as it was after the best-scoring epoch.
    pub model: HarModel,
    pub history: History,
}

/// Loss and parameter gradients (canonical order) summed over `indices`.
pub fn batch_gradients(
    model: &HarModel,
    data: &WindowedDataset,
    indices: &[usize],
    class_weights: Option<&[f64]>,
    rng: &mut Rng,
) -> Result<(f64, Vec<Tensor>)> {
    let mut total: Vec<Tensor> = model.params.flatten().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
    let mut loss = 0.0;
    for &i in indices {
        let mut g = Graph::new();
        let p = model.bind(&mut g);
        let input = g.leaf(data.window(i));
        let nodes = forward_graph(&mut g, input, &p, &model.config, rng, true, &ForwardOptions::default())?;
        let logits = Tensor::vector(g.value(nodes.logits).data().to_vec());
        let target = data.labels[i];
        loss += cross_entropy(&logits, target, class_weights)?;
        let seed = cross_entropy_grad(&logits, target, class_weights)?.reshape(&[1, logits.len()])?;
        let mut grads = g.backward(nodes.logits, seed);
        for ((_, v), acc) in p.flatten().into_iter().zip(total.iter_mut()) {
            if let Some(gv) = grads.take(v) {
                for (a, b) in acc.data_mut().iter_mut().zip(gv.data()) {
                    *a += b;
                }
            }
        }
    }
    Ok((loss, total))
}

fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        for g in grads {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
}

fn window_set_f1(model: &HarModel, data: &WindowedDataset) -> Result<f64> {
    let mut cm = ConfusionMatrix::new(model.config.classes);
    for i in 0..data.len() {
        cm.record(data.labels[i], model.predict(&data.window(i))?)?;
    }
    cm.macro_f1()
}

fn validation_scores(model: &HarModel, validation: Validation) -> Result<(Option<f64>, Option<f64>)> {
    let t = model.config.window_len;
    match validation {
        Validation::Windows(ds) => Ok((None, Some(window_set_f1(model, ds)?))),
        Validation::Recordings(recs) => {
            let usable: Vec<RawRecording> = recs.iter().filter(|r| r.len() >= t).cloned().collect();
            let sample = evaluate_recordings(model, &usable, t, Protocol::SampleWise)?.macro_f1()?;
            let window = evaluate_recordings(model, &usable, t, Protocol::WindowWise)?.macro_f1()?;
            Ok((Some(sample), Some(window)))
        }
    }
}

/// Mini-batch Adam over seeded shuffles, keeping the parameters from the
/// epoch with the best validation macro F1 in the protocol matching the
/// training mode; equal scores go to the lower training loss. Stops after
/// `patience` consecutive non-improving epochs (at least one) or `max_epochs`.
pub fn train(initial: &HarModel, data: &WindowedDataset, validation: Validation, run: &TrainRunConfig) -> Result<TrainOutcome> {
    run.validate()?;
    if data.is_empty() {
        return Err(Error::Protocol("training set has no windows".into()));
    }
    match validation {
        Validation::Recordings(r) if r.iter().all(|r| r.len() < initial.config.window_len) => {
            return Err(Error::Protocol("no validation recording is as long as one window".into()));
        }
        Validation::Windows(w) if w.is_empty() => return Err(Error::Protocol("validation set has no windows".into())),
        _ => {}
    }
    let cfg = &initial.config;
    if data.window_len != cfg.window_len || data.channels != cfg.channels {
        return Err(Error::shape("train", &[data.window_len, data.channels], &[cfg.window_len, cfg.channels]));
    }
    let weights = run.class_weighting.then(|| inverse_frequency_weights(&data.class_counts(cfg.classes)));
    let mut shuffle_rng = Rng::new(derive_seed(run.seed, 1));
    let mut dropout_rng = Rng::new(derive_seed(run.seed, 2));
    let mut model = initial.clone();
    let mut adam = AdamState::for_model(run.optimizer, &model.params);
    let mut best = model.clone();
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        best_score: f64::NEG_INFINITY,
    };
    let started = Instant::now();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut stale = 0;
    let mut best_loss = f64::INFINITY;
    for epoch in 1..=run.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(run.batch_size) {
            let (loss, mut grads) = batch_gradients(&model, data, batch, weights.as_deref(), &mut dropout_rng)?;
            loss_sum += loss;
            let n = batch.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v /= n;
                }
            }
            if let Some(c) = run.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam.step_model(&mut model.params, &grads)?;
        }
        let (val_f1_sample, val_f1_window) = validation_scores(&model, validation)?;
        let score = match run.mode {
            TrainMode::SampleWise => val_f1_sample.or(val_f1_window),
            TrainMode::WindowWise => val_f1_window,
        }
        .expect("validation produces a score");
        let train_loss = loss_sum / data.len() as f64;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_f1_sample,
            val_f1_window,
            wall_time: started.elapsed().as_secs_f64(),
        });
        if score > history.best_score || (score == history.best_score && train_loss < best_loss) {
            history.best_score = score;
            best_loss = train_loss;
            history.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= run.patience.max(1) {
                break;
            }
        }
    }
    Ok(TrainOutcome { model: best, history })
}
