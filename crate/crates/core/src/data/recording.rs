use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnRole, DatasetSchema, NullPolicy};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Per-sample label: a class index, or `None` for a null sample that is not
/// part of the class vocabulary.
pub type Label = Option<usize>;

/// One subject's multichannel time series with per-sample labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub subject_id: String,
    /// `N×S`, one row per sample.
    pub channels: Tensor,
    pub labels: Vec<Label>,
    pub sampling_rate_hz: f64,
}

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl RawRecording {
    pub fn new(subject_id: impl Into<String>, channels: Tensor, labels: Vec<Label>, sampling_rate_hz: f64) -> Result<Self> {
        let (n, _) = channels.dims2("recording")?;
        if n != labels.len() {
            return Err(Error::Data(format!("{n} samples but {} labels", labels.len())));
        }
        Ok(RawRecording {
            subject_id: subject_id.into(),
            channels,
            labels,
            sampling_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.shape()[1]
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.channels.row(i)
    }

    /// Samples `start..end` as a new recording of the same subject.
    pub fn slice(&self, start: usize, end: usize) -> Result<RawRecording> {
        if start >= end || end > self.len() {
            return Err(Error::Data(format!("slice {start}..{end} outside 0..{}", self.len())));
        }
        let s = self.channel_count();
        let data = self.channels.data()[start * s..end * s].to_vec();
        RawRecording::new(
            self.subject_id.clone(),
            Tensor::new(vec![end - start, s], data)?,
            self.labels[start..end].to_vec(),
            self.sampling_rate_hz,
        )
    }
}

/// Parses delimited text into a recording. `origin` names the source in errors.
pub fn load_recording(schema: &DatasetSchema, subject_id: &str, origin: &str, source: impl BufRead) -> Result<RawRecording> {
    let label_col = schema.label_column();
    let channel_cols: Vec<usize> = schema.channel_columns().map(|c| c.index).collect();
    let needed = schema.columns.iter().filter(|c| c.role != ColumnRole::Ignore).map(|c| c.index).max().unwrap_or(0) + 1;
    let null_class = match schema.null_policy {
        NullPolicy::Keep => schema
            .null_label
            .as_ref()
            .and_then(|n| schema.label_vocabulary.iter().find(|e| &e.raw == n))
            .map(|e| e.class),
        NullPolicy::Drop => None,
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if schema.delimiter == ' ' {
            line.split_whitespace().collect()
        } else {
            line.split(schema.delimiter).map(str::trim).collect()
        };
        let parse_err = |message: String| Error::Parse {
            origin: origin.to_string(),
            line: lineno,
            message,
        };
        if fields.len() < needed {
            return Err(parse_err(format!("expected at least {needed} fields, found {}", fields.len())));
        }
        let raw_label = fields[label_col];
        let label = match schema.label_vocabulary.iter().find(|e| e.raw == raw_label) {
            Some(entry) => Some(entry.class),
            None if schema.null_label.is_some() => null_class,
            None => {
                return Err(Error::Vocabulary {
                    origin: origin.to_string(),
                    line: lineno,
                    label: raw_label.to_string(),
                })
            }
        };
        for &c in &channel_cols {
            let token = fields[c];
            let v: f64 = token
                .parse()
                .map_err(|_| parse_err(format!("column {c}: {token:?} is not a number")))?;
            if v.is_infinite() {
                return Err(parse_err(format!("column {c}: infinite value")));
            }
            data.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{origin}: no samples")));
    }
    let channels = Tensor::new(vec![labels.len(), channel_cols.len()], data)?;
    RawRecording::new(subject_id, channels, labels, schema.sampling_rate_hz)
}

/// Reads one recording from disk; the subject id is the file stem.
pub fn load_recording_file(schema: &DatasetSchema, path: &Path) -> Result<RawRecording> {
    let file = File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let subject = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    load_recording(schema, &subject, &path.display().to_string(), BufReader::new(file))
}

/// Gap imputation followed by downsampling.
pub fn prepare_recording(rec: &RawRecording, keep_every: usize) -> Result<RawRecording> {
    downsample(&impute_missing(rec)?, keep_every)
}

/// Fills NaN gaps by linear interpolation between the nearest finite samples
/// of the same channel; leading and trailing gaps take the nearest finite value.
pub fn impute_missing(rec: &RawRecording) -> Result<RawRecording> {
    let (n, s) = (rec.len(), rec.channel_count());
    let mut out = rec.clone();
    let d = out.channels.data_mut();
    for c in 0..s {
        let finite: Vec<usize> = (0..n).filter(|&i| d[i * s + c].is_finite()).collect();
        let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
            return Err(Error::Data(format!("{}: channel {c} has no finite samples", rec.subject_id)));
        };
        if finite.len() == n {
            continue;
        }
        for i in 0..first {
            d[i * s + c] = d[first * s + c];
        }
        for i in last + 1..n {
            d[i * s + c] = d[last * s + c];
        }
        for pair in finite.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (va, vb) = (d[a * s + c], d[b * s + c]);
            for i in a + 1..b {
                let frac = (i - a) as f64 / (b - a) as f64;
                d[i * s + c] = va + (vb - va) * frac;
            }
        }
    }
    Ok(out)
}

/// Keeps samples `0, k, 2k, …`.
pub fn downsample(rec: &RawRecording, keep_every: usize) -> Result<RawRecording> {
    if keep_every == 0 {
        return Err(Error::Config("keep_every must be at least 1".into()));
    }
    if keep_every == 1 {
        return Ok(rec.clone());
    }
    let s = rec.channel_count();
    let kept: Vec<usize> = (0..rec.len()).step_by(keep_every).collect();
    let mut data = Vec::with_capacity(kept.len() * s);
    for &i in &kept {
        data.extend_from_slice(rec.sample(i));
    }
    RawRecording::new(
        rec.subject_id.clone(),
        Tensor::new(vec![kept.len(), s], data)?,
        kept.iter().map(|&i| rec.labels[i]).collect(),
        rec.sampling_rate_hz / keep_every as f64,
    )
}

impl NormStats {
    /// Statistics over all samples of the given recordings.
    pub fn fit(recordings: &[&RawRecording]) -> Result<NormStats> {
        let s = recordings
            .first()
            .ok_or_else(|| Error::Data("no recordings to fit normalisation on".into()))?
            .channel_count();
        let mut count = 0usize;
        let mut sum = vec![0.0; s];
        for rec in recordings {
            if rec.channel_count() != s {
                return Err(Error::shape("normalize", &[s], &[rec.channel_count()]));
            }
            for i in 0..rec.len() {
                for (acc, v) in sum.iter_mut().zip(rec.sample(i)) {
                    *acc += v;
                }
            }
            count += rec.len();
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
        let mut sq = vec![0.0; s];
        for rec in recordings {
            for i in 0..rec.len() {
                for ((acc, v), m) in sq.iter_mut().zip(rec.sample(i)).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = sq.iter().map(|v| (v / count as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(NormStats { mean, std })
    }
}

/// Per-channel z-scoring. Without `stats`, they are fitted on `rec` itself and
/// returned so the same transform can be applied to held-out data.
pub fn normalize(rec: &RawRecording, stats: Option<&NormStats>) -> Result<(RawRecording, NormStats)> {
    let stats = match stats {
        Some(st) => {
            if st.mean.len() != rec.channel_count() || st.std.len() != rec.channel_count() {
                return Err(Error::shape("normalize", &[st.mean.len()], &[rec.channel_count()]));
            }
            st.clone()
        }
        None => NormStats::fit(&[rec])?,
    };
    let mut out = rec.clone();
    let s = rec.channel_count();
    for row in out.channels.data_mut().chunks_mut(s) {
        for ((v, m), sd) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / sd.max(STD_FLOOR);
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{ColumnSpec, LabelEntry};

    fn tiny_schema() -> DatasetSchema {
        DatasetSchema {
            name: "tiny".into(),
            delimiter: ',',
            columns: vec![
                ColumnSpec { index: 0, role: ColumnRole::Label },
                ColumnSpec { index: 1, role: ColumnRole::Channel { sensor: "a".into(), axis: "x".into() } },
                ColumnSpec { index: 2, role: ColumnRole::Channel { sensor: "a".into(), axis: "y".into() } },
            ],
            label_vocabulary: vec![LabelEntry { raw: "1".into(), class: 0, name: String::new() }],
            null_label: None,
            null_policy: NullPolicy::Drop,
            sampling_rate_hz: 10.0,
            benchmark: Default::default(),
        }
    }

    fn single_channel(values: &[f64]) -> RawRecording {
        RawRecording::new("s", Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap(), vec![Some(0); values.len()], 100.0).unwrap()
    }

    #[test]
    fn loads_minimal_file() {
        let text = "1,0.5,1.5\n1,2,3\n1,-1,NaN\n";
        let rec = load_recording(&tiny_schema(), "s1", "mem", text.as_bytes()).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.channel_count(), 2);
        assert!(rec.channels.data()[5].is_nan());
    }

    #[test]
    fn non_numeric_token_names_line() {
        let err = load_recording(&tiny_schema(), "s1", "f.csv", "1,0,0\n1,x,0\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, ref origin, .. } => {
                assert_eq!(line, 2);
                assert_eq!(origin, "f.csv");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_label_without_null_class() {
        let err = load_recording(&tiny_schema(), "s1", "f", "7,0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Vocabulary { line: 1, .. }));
        let mut schema = tiny_schema();
        schema.null_label = Some("0".into());
        let rec = load_recording(&schema, "s1", "f", "7,0,0\n1,0,0\n".as_bytes()).unwrap();
        assert_eq!(rec.labels, vec![None, Some(0)]);
    }

    #[test]
    fn imputation_cases() {
        let fill = |v: &[f64]| impute_missing(&single_channel(v)).unwrap().channels.into_data();
        assert_eq!(fill(&[1.0, f64::NAN, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(fill(&[f64::NAN, 5.0, 5.0]), vec![5.0, 5.0, 5.0]);
        assert_eq!(fill(&[4.0, 1.0, f64::NAN]), vec![4.0, 1.0, 1.0]);
        assert_eq!(fill(&[1.0, 2.0]), vec![1.0, 2.0]);
        assert!(impute_missing(&single_channel(&[f64::NAN, f64::NAN])).is_err());
    }

    #[test]
    fn downsample_indices_and_rate() {
        let rec = single_channel(&(0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(downsample(&rec, 1).unwrap(), rec);
        let d = downsample(&rec, 3).unwrap();
        assert_eq!(d.channels.data(), &[0.0, 3.0, 6.0, 9.0]);
        assert!((d.sampling_rate_hz - 100.0 / 3.0).abs() < 1e-12);
        assert!(downsample(&rec, 0).is_err());
    }

    #[test]
    fn normalize_cases() {
        let (z, stats) = normalize(&single_channel(&[0.0, 2.0]), None).unwrap();
        assert_eq!(z.channels.data(), &[-1.0, 1.0]);
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
        let (z, _) = normalize(&single_channel(&[3.0, 3.0, 3.0]), None).unwrap();
        assert!(z.channels.data().iter().all(|v| *v == 0.0));

        let rec = single_channel(&[0.5, 1.0, 4.0]);
        let (a, st) = normalize(&rec, None).unwrap();
        let (b, _) = normalize(&rec, Some(&st)).unwrap();
        assert_eq!(a, b);

        let bad = NormStats { mean: vec![0.0; 2], std: vec![1.0; 2] };
        assert!(normalize(&rec, Some(&bad)).is_err());
    }
}
