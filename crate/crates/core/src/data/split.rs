use std::collections::BTreeSet;

use super::recording::RawRecording;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct Splits {
    pub train: Vec<RawRecording>,
    pub val: Vec<RawRecording>,
    pub test: Vec<RawRecording>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SplitPlan {
    /// Listed subjects form the test set; every other recording gives its
    /// trailing `val_fraction` (by time) to validation.
    Subjects { test: BTreeSet<String>, val_fraction: f64 },
    /// Single-subject datasets: contiguous leading `train`, next `val`, rest test.
    Fractions { train: f64, val: f64 },
}

fn split_point(len: usize, fraction: f64) -> usize {
    ((len as f64 * fraction).round() as usize).min(len)
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Config(format!("{name} must be in [0, 1], got {f}")));
    }
    Ok(())
}

/// Splits recordings into train/validation/test parts. Splits happen between
/// samples, so no window built afterwards can straddle two parts.
pub fn split_benchmark(recordings: &[RawRecording], plan: &SplitPlan) -> Result<Splits> {
    let mut out = Splits::default();
    match plan {
        SplitPlan::Subjects { test, val_fraction } => {
            check_fraction("val_fraction", *val_fraction)?;
            if test.is_empty() {
                return Err(Error::Config("no test subjects given".into()));
            }
            for id in test {
                if !recordings.iter().any(|r| &r.subject_id == id) {
                    return Err(Error::Data(format!("unknown test subject {id:?}")));
                }
            }
            let (held, rest): (Vec<RawRecording>, Vec<RawRecording>) =
                recordings.iter().cloned().partition(|r| test.contains(&r.subject_id));
            out.test = held;
            (out.train, out.val) = split_tail(&rest, *val_fraction)?;
        }
        SplitPlan::Fractions { train, val } => {
            check_fraction("train fraction", *train)?;
            check_fraction("val fraction", *val)?;
            if train + val > 1.0 {
                return Err(Error::Config("train + val fractions exceed 1".into()));
            }
            for rec in recordings {
                let a = split_point(rec.len(), *train);
                let b = split_point(rec.len(), train + val);
                for (part, lo, hi) in [(&mut out.train, 0, a), (&mut out.val, a, b), (&mut out.test, b, rec.len())] {
                    if lo < hi {
                        part.push(rec.slice(lo, hi)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Cuts the trailing `fraction` (by time) off every recording. Returns the
/// leading parts and the tails; empty parts are omitted.
pub fn split_tail(recordings: &[RawRecording], fraction: f64) -> Result<(Vec<RawRecording>, Vec<RawRecording>)> {
    check_fraction("val_fraction", fraction)?;
    let (mut head, mut tail) = (Vec::new(), Vec::new());
    for rec in recordings {
        let cut = rec.len() - split_point(rec.len(), fraction);
        if cut > 0 {
            head.push(rec.slice(0, cut)?);
        }
        if cut < rec.len() {
            tail.push(rec.slice(cut, rec.len())?);
        }
    }
    Ok((head, tail))
}

/// One leave-one-subject-out fold: recording indices for training and test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub held_out: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per distinct subject, in order of first appearance.
pub fn loso_splits(recordings: &[RawRecording]) -> Result<Vec<Fold>> {
    let mut subjects: Vec<&str> = Vec::new();
    for r in recordings {
        if !subjects.contains(&r.subject_id.as_str()) {
            subjects.push(&r.subject_id);
        }
    }
    if subjects.len() < 2 {
        return Err(Error::Protocol(format!("leave-one-subject-out needs at least 2 subjects, found {}", subjects.len())));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..recordings.len()).partition(|&i| recordings[i].subject_id == s);
            Fold {
                held_out: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}
