use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::protocols::{evaluate_recordings, Protocol};
use super::report::{EvalReport, FoldScores, ProtocolReport};
use crate::data::{loso_splits, normalize, split_tail, Fold, Labeling, NormStats, NullPolicy, RawRecording};
use crate::error::{Error, Result};
use crate::model::{HarModel, ModelConfig};
use crate::numerics::rng::derive_seed;
use crate::train::{train, training_windows, History, TrainRunConfig, Validation};

/// Everything that turns recordings into a trained, scored model.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub model: ModelConfig,
    pub train: TrainRunConfig,
    /// Overlap of window-wise training windows.
    pub overlap: f64,
    pub labeling: Labeling,
    pub null_policy: NullPolicy,
    pub normalize: bool,
    /// Trailing fraction of each training recording held out for validation.
    pub val_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: HarModel,
    pub history: History,
    pub normalization: Option<NormStats>,
    pub sample: ProtocolReport,
    pub window: ProtocolReport,
}

/// Normalises all parts with statistics fitted on `train` alone.
pub fn apply_normalization(
    train: &[RawRecording],
    others: &[&[RawRecording]],
) -> Result<(Vec<RawRecording>, Vec<Vec<RawRecording>>, NormStats)> {
    let stats = NormStats::fit(&train.iter().collect::<Vec<_>>())?;
    let norm = |recs: &[RawRecording]| -> Result<Vec<RawRecording>> { recs.iter().map(|r| Ok(normalize(r, Some(&stats))?.0)).collect() };
    let train = norm(train)?;
    let others = others.iter().map(|part| norm(part)).collect::<Result<Vec<_>>>()?;
    Ok((train, others, stats))
}

fn usable(recs: &[RawRecording], window_len: usize) -> Vec<RawRecording> {
    recs.iter().filter(|r| r.len() >= window_len).cloned().collect()
}

/// Trains a fresh model initialised from `seed` and scores its best epoch on
/// `test` in both protocols. With no validation recordings, selection falls
/// back to the training windows.
pub fn train_and_evaluate(
    exp: &Experiment,
    train_recs: &[RawRecording],
    val_recs: &[RawRecording],
    test_recs: &[RawRecording],
    seed: u64,
    class_names: &[String],
) -> Result<RunOutcome> {
    exp.model.validate()?;
    let t = exp.model.window_len;
    let (train_recs, val_recs, test_recs, normalization) = if exp.normalize {
        let (tr, mut rest, stats) = apply_normalization(train_recs, &[val_recs, test_recs])?;
        let test = rest.pop().expect("test part");
        let val = rest.pop().expect("val part");
        (tr, val, test, Some(stats))
    } else {
        (train_recs.to_vec(), val_recs.to_vec(), test_recs.to_vec(), None)
    };
    let windows = training_windows(&train_recs, t, exp.train.mode, exp.overlap, exp.labeling, exp.null_policy)?;
    let val_recs = usable(&val_recs, t);
    let validation = if val_recs.is_empty() { Validation::Windows(&windows) } else { Validation::Recordings(&val_recs) };
    let run = TrainRunConfig { seed, ..exp.train.clone() };
    let initial = HarModel::new(exp.model.clone(), seed)?;
    let outcome = train(&initial, &windows, validation, &run)?;
    let test_recs = usable(&test_recs, t);
    if test_recs.is_empty() {
        return Err(Error::Protocol(format!("no test recording is as long as one window ({t} samples)")));
    }
    let report = |p: Protocol| -> Result<ProtocolReport> {
        ProtocolReport::new(p, evaluate_recordings(&outcome.model, &test_recs, t, p)?, class_names)
    };
    let sample = report(Protocol::SampleWise)?;
    let window = report(Protocol::WindowWise)?;
    Ok(RunOutcome {
        model: outcome.model,
        history: outcome.history,
        normalization,
        sample,
        window,
    })
}

/// Seed of LOSO fold `index`, derived from the base seed.
pub fn fold_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, 0x1000 + index as u64)
}

#[derive(Clone, Debug)]
pub struct FoldRun {
    pub index: usize,
    pub held_out: String,
    pub seed: u64,
    pub outcome: RunOutcome,
}

impl FoldRun {
    pub fn scores(&self) -> FoldScores {
        FoldScores {
            held_out: self.held_out.clone(),
            seed: self.seed,
            f1_sample: self.outcome.sample.macro_f1,
            f1_window: self.outcome.window.macro_f1,
        }
    }
}

/// Trains on every subject but the fold's and tests on the held-out one.
pub fn run_fold(recordings: &[RawRecording], fold: &Fold, index: usize, exp: &Experiment, base_seed: u64, class_names: &[String]) -> Result<FoldRun> {
    let train_part: Vec<RawRecording> = fold.train.iter().map(|&i| recordings[i].clone()).collect();
    let test_part: Vec<RawRecording> = fold.test.iter().map(|&i| recordings[i].clone()).collect();
    let (train_part, val_part) = split_tail(&train_part, exp.val_fraction)?;
    let seed = fold_seed(base_seed, index);
    let outcome = train_and_evaluate(exp, &train_part, &val_part, &test_part, seed, class_names)?;
    Ok(FoldRun {
        index,
        held_out: fold.held_out.clone(),
        seed,
        outcome,
    })
}

/// Leave-one-subject-out cross validation; the report mean is unweighted.
pub fn run_loso(
    recordings: &[RawRecording],
    exp: &Experiment,
    base_seed: u64,
    dataset: &str,
    class_names: &[String],
) -> Result<(EvalReport, Vec<FoldRun>)> {
    let folds = loso_splits(recordings)?;
    let runs = folds
        .iter()
        .enumerate()
        .map(|(i, fold)| run_fold(recordings, fold, i, exp, base_seed, class_names))
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::loso(dataset, runs.iter().map(FoldRun::scores).collect())?;
    Ok((report, runs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window_size_samples: usize,
    pub window_size_seconds: f64,
    pub f1_sample: f64,
    pub f1_window: f64,
}

/// One full train-and-test run per window size, in the given order, all
/// with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn window_size_sweep(
    sizes: &[usize],
    exp: &Experiment,
    train_recs: &[RawRecording],
    val_recs: &[RawRecording],
    test_recs: &[RawRecording],
    seed: u64,
    class_names: &[String],
) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("window size sweep needs at least one size".into()));
    }
    let rate = train_recs
        .first()
        .ok_or_else(|| Error::Protocol("no training recordings".into()))?
        .sampling_rate_hz;
    sizes
        .iter()
        .map(|&size| {
            let exp = Experiment {
                model: ModelConfig { window_len: size, ..exp.model.clone() },
                ..exp.clone()
            };
            let run = train_and_evaluate(&exp, train_recs, val_recs, test_recs, seed, class_names)?;
            Ok(SweepRow {
                window_size_samples: size,
                window_size_seconds: size as f64 / rate,
                f1_sample: run.sample.macro_f1,
                f1_window: run.window.macro_f1,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "window_size_samples,window_size_seconds,f1_sample,f1_window";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.window_size_samples, r.window_size_seconds, r.f1_sample, r.f1_window);
    }
    out
}
