//! Browser bindings for three views of the model: the positional-encoding
//! table, the sensor attention of a small in-page model trained on planted
//! data, and how a label sequence is cut into windows.

use har_core::data::synthetic::{planted_windows, PlantedSpec};
use har_core::data::{make_boundary_padded_windows, stride_for, window_label, Label, Labeling, RawRecording, WindowedDataset};
use har_core::model::{positional_encoding, HarModel, ModelConfig};
use har_core::numerics::{Rng, Tensor};
use har_core::train::{batch_gradients, AdamConfig, AdamState};
use har_core::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Row-major `len×d` sinusoidal table.
pub fn pe_table(len: usize, d: usize) -> Result<Vec<f64>> {
    Ok(positional_encoding(len, d)?.into_data())
}

#[wasm_bindgen(js_name = positionalEncoding)]
pub fn positional_encoding_js(len: usize, d: usize) -> Result<Vec<f64>, JsValue> {
    pe_table(len, d).map_err(js)
}

pub const DEMO_WINDOW: usize = 16;
pub const DEMO_CLASSES: usize = 3;
const DEMO_WINDOWS: usize = 48;
const DEMO_BATCH: usize = 8;

/// One planted window run through the model.
#[derive(Clone, Debug, Serialize)]
pub struct Inspection {
    pub class: usize,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
    /// `T×S`, row-major.
    pub window: Vec<f64>,
    /// `T×S`, row-major; each row sums to 1.
    pub scores: Vec<f64>,
    pub temporal: Vec<f64>,
}

/// A small model trained in the page on planted-signal windows.
#[wasm_bindgen]
pub struct AttentionDemo {
    spec: PlantedSpec,
    model: HarModel,
    data: WindowedDataset,
    adam: AdamState,
    rng: Rng,
    order: Vec<usize>,
    epochs: usize,
}

impl AttentionDemo {
    pub fn create(channels: usize, informative: usize, seed: u64) -> Result<Self> {
        let spec = PlantedSpec::new(channels, DEMO_CLASSES, informative)?;
        let config = ModelConfig {
            window_len: DEMO_WINDOW,
            channels,
            classes: DEMO_CLASSES,
            d_model: 8,
            n_blocks: 1,
            n_heads: 2,
            ffn_dim: Some(16),
            k_filters: 4,
            dropout: 0.0,
            ..Default::default()
        };
        let model = HarModel::new(config, seed)?;
        let adam = AdamState::for_model(AdamConfig { learning_rate: 0.01, ..Default::default() }, &model.params);
        let data = planted_windows(&spec, DEMO_WINDOWS, DEMO_WINDOW, seed);
        Ok(AttentionDemo {
            spec,
            model,
            data,
            adam,
            rng: Rng::new(seed),
            order: (0..DEMO_WINDOWS).collect(),
            epochs: 0,
        })
    }

    /// Runs `n` epochs and returns the mean loss of the last one.
    pub fn train(&mut self, n: usize) -> Result<f64> {
        let mut mean = f64::NAN;
        for _ in 0..n {
            self.rng.shuffle(&mut self.order);
            let mut total = 0.0;
            for batch in self.order.chunks(DEMO_BATCH) {
                let (loss, mut grads) = batch_gradients(&self.model, &self.data, batch, None, &mut self.rng)?;
                total += loss;
                for g in &mut grads {
                    *g = g.map(|v| v / batch.len() as f64);
                }
                self.adam.step_model(&mut self.model.params, &grads)?;
            }
            mean = total / self.data.len() as f64;
            self.epochs += 1;
        }
        Ok(mean)
    }

    /// Draws a fresh window of `class` and reports what the model makes of it.
    pub fn inspect(&mut self, class: usize) -> Result<Inspection> {
        if class >= DEMO_CLASSES {
            return Err(Error::Config(format!("class {class} outside 0..{DEMO_CLASSES}")));
        }
        let fresh = planted_windows(&self.spec, class + 1, DEMO_WINDOW, self.rng.next_u64());
        let window: Tensor = fresh.window(class);
        let p = self.model.infer(&window)?;
        Ok(Inspection {
            class,
            predicted: p.class(),
            probabilities: p.probabilities().into_data(),
            window: window.into_data(),
            scores: p.artifacts.sensor_scores.into_data(),
            temporal: p.artifacts.temporal_alpha.into_data(),
        })
    }

    fn accuracy_on(&self, data: &WindowedDataset) -> Result<f64> {
        let mut right = 0;
        for i in 0..data.len() {
            right += usize::from(self.model.predict(&data.window(i))? == data.labels[i]);
        }
        Ok(right as f64 / data.len() as f64)
    }

    /// Training-set accuracy.
    pub fn accuracy(&self) -> Result<f64> {
        self.accuracy_on(&self.data)
    }

    /// Accuracy on `count` freshly drawn windows.
    pub fn held_out_accuracy(&mut self, count: usize) -> Result<f64> {
        let fresh = planted_windows(&self.spec, count.max(1), DEMO_WINDOW, self.rng.next_u64());
        self.accuracy_on(&fresh)
    }
}

#[wasm_bindgen]
impl AttentionDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(channels: usize, informative: usize, seed: u32) -> Result<AttentionDemo, JsValue> {
        Self::create(channels, informative, u64::from(seed)).map_err(js)
    }

    #[wasm_bindgen(js_name = trainEpochs)]
    pub fn train_epochs(&mut self, n: usize) -> Result<f64, JsValue> {
        self.train(n).map_err(js)
    }

    /// JSON-encoded [`Inspection`].
    #[wasm_bindgen(js_name = inspect)]
    pub fn inspect_js(&mut self, class: usize) -> Result<String, JsValue> {
        let i = self.inspect(class).map_err(js)?;
        Ok(serde_json::to_string(&i).expect("inspection serialises"))
    }

    #[wasm_bindgen(js_name = trainingAccuracy)]
    pub fn training_accuracy(&self) -> Result<f64, JsValue> {
        self.accuracy().map_err(js)
    }

    #[wasm_bindgen(js_name = heldOutAccuracy)]
    pub fn held_out_accuracy_js(&mut self, count: usize) -> Result<f64, JsValue> {
        self.held_out_accuracy(count).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    #[wasm_bindgen(getter, js_name = windowLen)]
    pub fn window_len(&self) -> usize {
        DEMO_WINDOW
    }

    #[wasm_bindgen(getter)]
    pub fn channels(&self) -> usize {
        self.spec.channels
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowSpan {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowPreview {
    pub stride: usize,
    /// Sliding training windows; null-labelled ones would be dropped.
    pub sliding: Vec<WindowSpan>,
    /// Window-wise test windows; spans shorter than `T` are repeat-padded.
    pub padded: Vec<WindowSpan>,
    /// Sample-wise testing scores samples from this index on.
    pub first_scored: usize,
}

/// Parses labels separated by spaces or commas; `-` marks a null sample.
pub fn parse_labels(text: &str) -> Result<Vec<Label>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| match t {
            "-" => Ok(None),
            t => t.parse().map(Some).map_err(|_| Error::Config(format!("bad label {t:?}"))),
        })
        .collect()
}

pub fn preview(labels: &[Label], window_len: usize, overlap: f64, labeling: Labeling) -> Result<WindowPreview> {
    if window_len == 0 || window_len > labels.len() {
        return Err(Error::Config(format!("window length must be in 1..={}", labels.len())));
    }
    let stride = stride_for(window_len, overlap)?;
    let sliding = (0..=labels.len() - window_len)
        .step_by(stride)
        .map(|start| WindowSpan {
            start,
            end: start + window_len,
            label: window_label(&labels[start..start + window_len], labeling),
        })
        .collect();
    let rec = RawRecording::new("preview", Tensor::zeros(&[labels.len(), 1]), labels.to_vec(), 1.0)?;
    let ds = make_boundary_padded_windows(&rec, window_len)?;
    let padded = ds
        .spans
        .iter()
        .zip(&ds.labels)
        .map(|(s, &l)| WindowSpan {
            start: s.start,
            end: s.end,
            label: Some(l),
        })
        .collect();
    Ok(WindowPreview {
        stride,
        sliding,
        padded,
        first_scored: window_len - 1,
    })
}

/// JSON-encoded [`WindowPreview`] of a label string.
#[wasm_bindgen(js_name = windowPreview)]
pub fn window_preview_js(labels: &str, window_len: usize, overlap: f64, majority: bool) -> Result<String, JsValue> {
    let labels = parse_labels(labels).map_err(js)?;
    let labeling = if majority { Labeling::Majority } else { Labeling::LastSample };
    let p = preview(&labels, window_len, overlap, labeling).map_err(js)?;
    Ok(serde_json::to_string(&p).expect("preview serialises"))
}
