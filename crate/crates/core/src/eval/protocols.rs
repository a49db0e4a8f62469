use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use crate::data::{make_boundary_padded_windows, RawRecording};
use crate::error::{Error, Result};
use crate::model::HarModel;
use crate::numerics::Tensor;

/// Anything that maps a `T×S` window to a class index.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn classify(&self, window: &Tensor) -> Result<usize>;
}

impl Classifier for HarModel {
    fn num_classes(&self) -> usize {
        self.config.classes
    }

    fn classify(&self, window: &Tensor) -> Result<usize> {
        self.predict(window)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SampleWise,
    WindowWise,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::SampleWise => "sample-wise",
            Protocol::WindowWise => "window-wise",
        }
    }
}

fn check_length(rec: &RawRecording, window_len: usize) -> Result<()> {
    if window_len == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    if rec.len() < window_len {
        return Err(Error::Data(format!(
            "{}: recording of {} samples is shorter than the window length {window_len}",
            rec.subject_id,
            rec.len()
        )));
    }
    Ok(())
}

/// Stride-1 windows; each prediction is attributed to the window's last
/// sample. The first `T−1` samples get no prediction, and null-labelled
/// samples are predicted but not scored.
pub fn evaluate_sample_wise<M: Classifier + ?Sized>(
    model: &M,
    rec: &RawRecording,
    window_len: usize,
) -> Result<(ConfusionMatrix, Vec<Option<usize>>)> {
    check_length(rec, window_len)?;
    let s = rec.channel_count();
    let data = rec.channels.data();
    let mut cm = ConfusionMatrix::new(model.num_classes());
    let mut predictions = vec![None; rec.len()];
    for end in window_len - 1..rec.len() {
        let start = end + 1 - window_len;
        let window = Tensor::new(vec![window_len, s], data[start * s..(end + 1) * s].to_vec())?;
        let p = model.classify(&window)?;
        predictions[end] = Some(p);
        if let Some(truth) = rec.labels[end] {
            cm.record(truth, p)?;
        }
    }
    Ok((cm, predictions))
}

/// Non-overlapping windows restarted at label boundaries, short segments
/// repeat-padded; one prediction per window.
pub fn evaluate_window_wise<M: Classifier + ?Sized>(model: &M, rec: &RawRecording, window_len: usize) -> Result<ConfusionMatrix> {
    check_length(rec, window_len)?;
    let ds = make_boundary_padded_windows(rec, window_len)?;
    let mut cm = ConfusionMatrix::new(model.num_classes());
    for i in 0..ds.len() {
        cm.record(ds.labels[i], model.classify(&ds.window(i))?)?;
    }
    Ok(cm)
}

/// Confusion matrix summed over several recordings.
pub fn evaluate_recordings<M: Classifier + ?Sized>(
    model: &M,
    recordings: &[RawRecording],
    window_len: usize,
    protocol: Protocol,
) -> Result<ConfusionMatrix> {
    let mut total = ConfusionMatrix::new(model.num_classes());
    for rec in recordings {
        let cm = match protocol {
            Protocol::SampleWise => evaluate_sample_wise(model, rec, window_len)?.0,
            Protocol::WindowWise => evaluate_window_wise(model, rec, window_len)?,
        };
        total.merge(&cm)?;
    }
    Ok(total)
}
