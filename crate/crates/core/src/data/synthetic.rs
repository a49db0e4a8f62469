//! Planted-signal data: one channel carries the class, the rest are noise.
//!
//! The informative channel sits at a class-dependent positive level with a
//! small class-specific oscillation; noise channels are standard normal.

use super::recording::RawRecording;
use super::schema::{ColumnRole, ColumnSpec, DatasetSchema, LabelEntry, NullPolicy};
use super::windows::{Span, WindowedDataset};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpec {
    pub channels: usize,
    pub classes: usize,
    pub informative: usize,
    pub noise_std: f64,
}

impl PlantedSpec {
    pub fn new(channels: usize, classes: usize, informative: usize) -> Result<Self> {
        if informative >= channels || classes == 0 {
            return Err(Error::Config(format!(
                "informative channel {informative} must be below channel count {channels}, with at least one class"
            )));
        }
        Ok(PlantedSpec {
            channels,
            classes,
            informative,
            noise_std: 0.25,
        })
    }

    fn level(&self, class: usize) -> f64 {
        1.0 + 1.5 * class as f64
    }

    /// Writes one sample at time index `t` into `out`.
    fn sample(&self, class: usize, t: usize, rng: &mut Rng, out: &mut Vec<f64>) {
        for c in 0..self.channels {
            let v = if c == self.informative {
                let phase = t as f64 * 0.2 * (class + 1) as f64;
                self.level(class) + 0.3 * phase.sin() + self.noise_std * rng.normal()
            } else {
                rng.normal()
            };
            out.push(v);
        }
    }
}

/// `count` windows of length `window_len`, classes assigned round-robin.
pub fn planted_windows(spec: &PlantedSpec, count: usize, window_len: usize, seed: u64) -> WindowedDataset {
    let mut rng = Rng::new(seed);
    let mut ds = WindowedDataset::empty(window_len, spec.channels);
    ds.sources.push(format!("planted-{seed}"));
    let mut buf = Vec::with_capacity(window_len * spec.channels);
    for i in 0..count {
        let class = i % spec.classes;
        buf.clear();
        for t in 0..window_len {
            spec.sample(class, t, &mut rng, &mut buf);
        }
        let start = i * window_len;
        ds.push(&buf, class, Span { source: 0, start, end: start + window_len });
    }
    ds
}

/// A continuous recording made of labelled activity segments.
pub fn planted_recording(spec: &PlantedSpec, subject: &str, segments: &[(usize, usize)], sampling_rate_hz: f64, seed: u64) -> Result<RawRecording> {
    let mut rng = Rng::new(seed);
    let n: usize = segments.iter().map(|&(_, len)| len).sum();
    let mut data = Vec::with_capacity(n * spec.channels);
    let mut labels = Vec::with_capacity(n);
    for &(class, len) in segments {
        if class >= spec.classes {
            return Err(Error::Config(format!("segment class {class} outside 0..{}", spec.classes)));
        }
        for t in 0..len {
            spec.sample(class, t, &mut rng, &mut data);
            labels.push(Some(class));
        }
    }
    RawRecording::new(subject, Tensor::new(vec![n, spec.channels], data)?, labels, sampling_rate_hz)
}

/// Comma-separated schema matching [`to_delimited`]: label in column 0,
/// channels after it, raw labels `"1".."C"`.
pub fn planted_schema(spec: &PlantedSpec, sampling_rate_hz: f64) -> DatasetSchema {
    let mut columns = vec![ColumnSpec { index: 0, role: ColumnRole::Label }];
    for c in 0..spec.channels {
        let sensor = if c == spec.informative { "signal".to_string() } else { format!("noise{c}") };
        columns.push(ColumnSpec {
            index: c + 1,
            role: ColumnRole::Channel { sensor, axis: String::new() },
        });
    }
    DatasetSchema {
        name: "planted".into(),
        delimiter: ',',
        columns,
        label_vocabulary: (0..spec.classes)
            .map(|c| LabelEntry {
                raw: (c + 1).to_string(),
                class: c,
                name: format!("activity{c}"),
            })
            .collect(),
        null_label: Some("0".into()),
        null_policy: NullPolicy::Drop,
        sampling_rate_hz,
        benchmark: Default::default(),
    }
}

/// Serialises a recording in the layout of [`planted_schema`].
pub fn to_delimited(rec: &RawRecording) -> String {
    let mut out = String::new();
    for i in 0..rec.len() {
        out.push_str(&rec.labels[i].map_or(0, |c| c + 1).to_string());
        for v in rec.sample(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}
