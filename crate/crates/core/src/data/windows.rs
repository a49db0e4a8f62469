use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::recording::{Label, NormStats, RawRecording};
use super::schema::NullPolicy;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeling {
    /// Most frequent label; ties go to the tied label seen latest in the window.
    #[default]
    Majority,
    LastSample,
}

/// Samples `start..end` of source recording `source`. For repeat-padded
/// windows `end - start` is shorter than the window length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub source: usize,
    pub start: usize,
    pub end: usize,
}

/// Fixed-length labelled windows, stored contiguously as `B×T×S`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub window_len: usize,
    pub channels: usize,
    data: Vec<f64>,
    pub labels: Vec<usize>,
    pub spans: Vec<Span>,
    /// Subject ids indexed by `Span::source`.
    pub sources: Vec<String>,
    pub normalization: Option<NormStats>,
}

impl WindowedDataset {
    pub fn empty(window_len: usize, channels: usize) -> Self {
        WindowedDataset {
            window_len,
            channels,
            data: Vec::new(),
            labels: Vec::new(),
            spans: Vec::new(),
            sources: Vec::new(),
            normalization: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Window `i` as a `T×S` tensor.
    pub fn window(&self, i: usize) -> Tensor {
        let size = self.window_len * self.channels;
        Tensor::new(vec![self.window_len, self.channels], self.data[i * size..(i + 1) * size].to_vec()).expect("shape")
    }

    /// All windows as `B×T×S`, or `None` when empty.
    pub fn windows(&self) -> Option<Tensor> {
        (!self.is_empty()).then(|| Tensor::new(vec![self.len(), self.window_len, self.channels], self.data.clone()).expect("shape"))
    }

    pub fn push(&mut self, window: &[f64], label: usize, span: Span) {
        debug_assert_eq!(window.len(), self.window_len * self.channels);
        self.data.extend_from_slice(window);
        self.labels.push(label);
        self.spans.push(span);
    }

    /// Appends `other`, remapping its source indices after ours.
    pub fn extend(&mut self, other: &WindowedDataset) -> Result<()> {
        if other.window_len != self.window_len || other.channels != self.channels {
            return Err(Error::shape(
                "dataset extend",
                &[self.window_len, self.channels],
                &[other.window_len, other.channels],
            ));
        }
        let offset = self.sources.len();
        self.sources.extend(other.sources.iter().cloned());
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        self.spans.extend(other.spans.iter().map(|s| Span { source: s.source + offset, ..*s }));
        Ok(())
    }

    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Writes `<stem>.bin` (tensor dump) and `<stem>.json` (labels, spans,
    /// stats, schema hash). Empty datasets cannot be cached.
    pub fn save(&self, dir: &Path, stem: &str, schema_hash: &str) -> Result<()> {
        let windows = self
            .windows()
            .ok_or_else(|| Error::Data("refusing to cache an empty window set".into()))?;
        let bytes = windows.to_bytes();
        let sidecar = CacheSidecar {
            labels: self.labels.clone(),
            spans: self.spans.clone(),
            sources: self.sources.clone(),
            normalization: self.normalization.clone(),
            schema_hash: schema_hash.to_string(),
            data_sha256: crate::io::sha256_hex(&bytes),
        };
        write_atomic(&dir.join(format!("{stem}.bin")), &bytes)?;
        write_atomic(&dir.join(format!("{stem}.json")), &serde_json::to_vec_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Loads a cache written by [`WindowedDataset::save`], returning it with its schema hash.
    pub fn load(dir: &Path, stem: &str) -> Result<(WindowedDataset, String)> {
        let bytes = read_file(&dir.join(format!("{stem}.bin")))?;
        let sidecar: CacheSidecar = serde_json::from_slice(&read_file(&dir.join(format!("{stem}.json")))?)?;
        if crate::io::sha256_hex(&bytes) != sidecar.data_sha256 {
            return Err(Error::Integrity(format!("{stem}.bin does not match its sidecar checksum")));
        }
        let t = Tensor::read_from(&mut bytes.as_slice())?;
        let &[b, w, s] = t.shape() else {
            return Err(Error::Integrity(format!("{stem}.bin: expected rank-3 windows")));
        };
        if b != sidecar.labels.len() || b != sidecar.spans.len() {
            return Err(Error::Integrity(format!("{stem}: label/span count disagrees with window count")));
        }
        let ds = WindowedDataset {
            window_len: w,
            channels: s,
            data: t.into_data(),
            labels: sidecar.labels,
            spans: sidecar.spans,
            sources: sidecar.sources,
            normalization: sidecar.normalization,
        };
        Ok((ds, sidecar.schema_hash))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheSidecar {
    labels: Vec<usize>,
    spans: Vec<Span>,
    sources: Vec<String>,
    normalization: Option<NormStats>,
    schema_hash: String,
    data_sha256: String,
}

/// `round(T·(1−overlap))`, at least 1.
pub fn stride_for(window_len: usize, overlap: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap must be in [0, 1), got {overlap}")));
    }
    Ok(((window_len as f64 * (1.0 - overlap)).round() as usize).max(1))
}

/// Label of a window under the given rule.
pub fn window_label(labels: &[Label], labeling: Labeling) -> Label {
    let last = *labels.last().expect("non-empty window");
    match labeling {
        Labeling::LastSample => last,
        Labeling::Majority => {
            let mut counts: HashMap<Label, (usize, usize)> = HashMap::new();
            for (pos, &l) in labels.iter().enumerate() {
                let e = counts.entry(l).or_insert((0, 0));
                e.0 += 1;
                e.1 = pos;
            }
            counts
                .into_iter()
                .max_by_key(|&(_, (count, latest))| (count, latest))
                .map(|(l, _)| l)
                .expect("non-empty window")
        }
    }
}

fn check_window_len(rec: &RawRecording, window_len: usize) -> Result<()> {
    if window_len == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    if window_len > rec.len() {
        return Err(Error::Data(format!(
            "{}: window length {window_len} exceeds recording length {}",
            rec.subject_id,
            rec.len()
        )));
    }
    Ok(())
}

/// Sliding windows starting at `0, stride, 2·stride, …` while they fit.
/// Null-labelled windows are dropped unless `null_policy` keeps them, which
/// requires null samples to carry a vocabulary class already.
pub fn make_windows(rec: &RawRecording, window_len: usize, overlap: f64, labeling: Labeling, null_policy: NullPolicy) -> Result<WindowedDataset> {
    make_windows_with_stride(rec, window_len, stride_for(window_len, overlap)?, labeling, null_policy)
}

/// As [`make_windows`] with an explicit stride.
pub fn make_windows_with_stride(
    rec: &RawRecording,
    window_len: usize,
    stride: usize,
    labeling: Labeling,
    null_policy: NullPolicy,
) -> Result<WindowedDataset> {
    check_window_len(rec, window_len)?;
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let s = rec.channel_count();
    let mut ds = WindowedDataset::empty(window_len, s);
    ds.sources.push(rec.subject_id.clone());
    let data = rec.channels.data();
    let mut start = 0;
    while start + window_len <= rec.len() {
        let end = start + window_len;
        match window_label(&rec.labels[start..end], labeling) {
            Some(label) => ds.push(&data[start * s..end * s], label, Span { source: 0, start, end }),
            None if null_policy == NullPolicy::Drop => {}
            None => return Err(Error::Data("null samples without a vocabulary class cannot be kept".into())),
        }
        start += stride;
    }
    Ok(ds)
}

/// Non-overlapping windows that restart at every label change. A segment
/// shorter than `T` is padded by repeating its last sample; null segments
/// are skipped.
pub fn make_boundary_padded_windows(rec: &RawRecording, window_len: usize) -> Result<WindowedDataset> {
    if window_len == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    let s = rec.channel_count();
    let mut ds = WindowedDataset::empty(window_len, s);
    ds.sources.push(rec.subject_id.clone());
    let data = rec.channels.data();
    let mut buf = Vec::with_capacity(window_len * s);
    let mut start = 0;
    while start < rec.len() {
        let label = rec.labels[start];
        let mut end = start + 1;
        while end < rec.len() && end - start < window_len && rec.labels[end] == label {
            end += 1;
        }
        if let Some(class) = label {
            buf.clear();
            buf.extend_from_slice(&data[start * s..end * s]);
            let last = &data[(end - 1) * s..end * s];
            for _ in end - start..window_len {
                buf.extend_from_slice(last);
            }
            ds.push(&buf, class, Span { source: 0, start, end });
        }
        start = end;
    }
    Ok(ds)
}

/// Re-extracts a window from its source recording, repeating the last
/// sample when the span is shorter than the window.
pub fn reslice(rec: &RawRecording, span: Span, window_len: usize) -> Tensor {
    let s = rec.channel_count();
    let mut data = rec.channels.data()[span.start * s..span.end * s].to_vec();
    let last = rec.sample(span.end - 1).to_vec();
    for _ in span.end - span.start..window_len {
        data.extend_from_slice(&last);
    }
    Tensor::new(vec![window_len, s], data).expect("shape")
}
