use std::fmt::Write as _;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::HarModel;
use crate::numerics::Tensor;

/// Mean `T×S` sensor-attention map over the windows predicted as `class`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassAttention {
    pub class: usize,
    pub windows: usize,
    pub mean_scores: Tensor,
}

impl ClassAttention {
    /// Time-averaged scores, one per sensor channel.
    pub fn profile(&self) -> Vec<f64> {
        let (t, s) = self.mean_scores.dims2("profile").expect("2-D map");
        (0..s).map(|j| (0..t).map(|i| self.mean_scores.at2(i, j)).sum::<f64>() / t as f64).collect()
    }

    /// One row per time-step under a sensor-name header.
    pub fn to_csv(&self, sensor_names: &[String]) -> String {
        let mut out = format!("{}\n", sensor_names.join(","));
        let s = self.mean_scores.shape()[1];
        for row in self.mean_scores.data().chunks(s) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSummary {
    pub maps: Vec<ClassAttention>,
    /// Requested classes with no predicted window.
    pub skipped: Vec<usize>,
}

/// Groups windows by predicted class and averages their sensor scores.
/// `classes` restricts the output; `None` means every class.
pub fn class_attention_maps(model: &HarModel, data: &WindowedDataset, classes: Option<&[usize]>) -> Result<AttentionSummary> {
    let c = model.config.classes;
    if let Some(bad) = classes.and_then(|cs| cs.iter().find(|&&k| k >= c)) {
        return Err(Error::Config(format!("class {bad} outside 0..{c}")));
    }
    let (t, s) = (model.config.window_len, model.config.channels);
    let mut sums = vec![Tensor::zeros(&[t, s]); c];
    let mut counts = vec![0usize; c];
    for i in 0..data.len() {
        let p = model.infer(&data.window(i))?;
        let k = p.class();
        if classes.is_some_and(|cs| !cs.contains(&k)) {
            continue;
        }
        counts[k] += 1;
        for (a, b) in sums[k].data_mut().iter_mut().zip(p.artifacts.sensor_scores.data()) {
            *a += b;
        }
    }
    let wanted: Vec<usize> = classes.map_or_else(|| (0..c).collect(), <[usize]>::to_vec);
    let mut summary = AttentionSummary { maps: Vec::new(), skipped: Vec::new() };
    for k in wanted {
        if counts[k] == 0 {
            summary.skipped.push(k);
            continue;
        }
        let n = counts[k] as f64;
        summary.maps.push(ClassAttention {
            class: k,
            windows: counts[k],
            mean_scores: sums[k].map(|v| v / n),
        });
    }
    Ok(summary)
}

/// One row per class: its name followed by the time-averaged sensor profile.
pub fn profiles_csv(maps: &[ClassAttention], sensor_names: &[String], class_names: &[String]) -> String {
    let mut out = format!("class,{}\n", sensor_names.join(","));
    for m in maps {
        let name = class_names.get(m.class).cloned().unwrap_or_else(|| format!("class{}", m.class));
        let cells: Vec<String> = m.profile().iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{name},{}", cells.join(","));
    }
    out
}
