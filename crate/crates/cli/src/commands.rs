use std::fs;
use std::path::{Path, PathBuf};

use har_core::data::synthetic::{planted_recording, planted_schema, to_delimited, PlantedSpec};
use har_core::data::{loso_splits, NormStats, RawRecording};
use har_core::eval::{
    apply_normalization, class_attention_maps, evaluate_recordings, profiles_csv, run_fold, sweep_csv, train_and_evaluate, window_size_sweep,
    EvalReport, FoldScores, Protocol, ProtocolReport,
};
use har_core::io::{read_file, sha256_hex, write_atomic};
use har_core::model::{load_checkpoint, save_checkpoint, Checkpoint, HarModel, ModelConfig};
use har_core::numerics::Rng;
use har_core::train::History;
use har_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Resolved;
use crate::pipeline::{data_files, load_recordings, load_splits, normalized, window_set};

pub const CONFIG_FILE: &str = "config.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const FOLD_DONE: &str = "complete";

/// Training provenance stored in the checkpoint manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_hash: String,
    pub best_epoch: usize,
    pub best_score: f64,
    pub normalization: Option<NormStats>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartChoice {
    Train,
    Val,
    Test,
}

impl PartChoice {
    pub fn name(self) -> &'static str {
        match self {
            PartChoice::Train => "train",
            PartChoice::Val => "val",
            PartChoice::Test => "test",
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn out_dir(r: &Resolved) -> PathBuf {
    PathBuf::from(&r.config.output)
}

fn is_nonempty_dir(dir: &Path) -> bool {
    fs::read_dir(dir).is_ok_and(|mut d| d.next().is_some())
}

fn clear_dir(dir: &Path) -> Result<()> {
    fs::remove_dir_all(dir).map_err(|e| Error::io(dir.display(), e))
}

fn history_csv(r: &Resolved, h: &History) -> String {
    if r.config.record_wall_time {
        h.to_csv()
    } else {
        h.to_csv_untimed()
    }
}

fn save_run(dir: &Path, r: &Resolved, model: &HarModel, seed: u64, history: &History, normalization: Option<NormStats>) -> Result<()> {
    let meta = RunMetadata {
        schema_hash: r.schema.hash(),
        best_epoch: history.best_epoch,
        best_score: history.best_score,
        normalization,
    };
    save_checkpoint(&dir.join(CHECKPOINT_DIR), model, seed, serde_json::to_value(meta)?)?;
    write_text(&dir.join(HISTORY_FILE), &history_csv(r, history))
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    write_text(&dir.join(format!("{stem}.json")), &(report.to_json() + "\n"))?;
    write_text(&dir.join(format!("{stem}.txt")), &report.to_table())
}

fn part(splits: har_core::data::Splits, which: PartChoice) -> Vec<RawRecording> {
    match which {
        PartChoice::Train => splits.train,
        PartChoice::Val => splits.val,
        PartChoice::Test => splits.test,
    }
}

/// Loads a checkpoint and checks it against the configured model.
fn compatible_checkpoint(r: &Resolved, path: &Path) -> Result<(Checkpoint, RunMetadata)> {
    let ck = load_checkpoint(path)?;
    let differing = ck.model.config.diff(&r.config.model);
    if !differing.is_empty() {
        return Err(Error::Compatibility(differing));
    }
    let meta: RunMetadata = serde_json::from_value(ck.metadata.clone())
        .map_err(|e| Error::Integrity(format!("{}: checkpoint metadata: {e}", path.display())))?;
    if meta.schema_hash != r.schema.hash() {
        return Err(Error::Compatibility(vec!["schema".into()]));
    }
    Ok((ck, meta))
}

fn usable(recs: Vec<RawRecording>, t: usize, what: &str) -> Result<Vec<RawRecording>> {
    let recs: Vec<RawRecording> = recs.into_iter().filter(|r| r.len() >= t).collect();
    if recs.is_empty() {
        return Err(Error::Protocol(format!("the {what} split has no recording as long as one window ({t} samples)")));
    }
    Ok(recs)
}

pub fn ingest(r: &Resolved) -> Result<()> {
    let c = &r.config;
    let cache = out_dir(r).join("cache");
    let inputs = data_files(&c.data)?
        .iter()
        .map(|f| Ok(json!({"path": f.display().to_string(), "sha256": sha256_hex(&read_file(f)?)})))
        .collect::<Result<Vec<_>>>()?;
    let key = json!({
        "schema": r.schema.name,
        "schema_hash": r.schema.hash(),
        "inputs": inputs,
        "preprocess": c.preprocess,
        "window": c.window,
        "window_len": c.model.window_len,
        "split": c.split,
    });
    let manifest_path = cache.join("manifest.json");
    if let Ok(bytes) = fs::read(&manifest_path) {
        let previous: serde_json::Value = serde_json::from_slice(&bytes).unwrap_or_default();
        if previous.get("key") == Some(&key) {
            eprintln!("cache up to date: {}", cache.display());
            return Ok(());
        }
    }
    let splits = load_splits(r)?;
    let (train, val, test, stats) = if c.preprocess.normalize && !splits.train.is_empty() {
        let (train, mut rest, stats) = apply_normalization(&splits.train, &[&splits.val, &splits.test])?;
        let test = rest.pop().expect("test");
        (train, rest.pop().expect("val"), test, Some(stats))
    } else {
        (splits.train, splits.val, splits.test, None)
    };
    let hash = r.schema.hash();
    let mut counts = serde_json::Map::new();
    for (name, recs) in [("train", &train), ("val", &val), ("test", &test)] {
        let mut ds = window_set(r, recs)?;
        ds.normalization = stats.clone();
        counts.insert(name.into(), json!(ds.len()));
        if ds.is_empty() {
            for ext in ["bin", "json"] {
                let _ = fs::remove_file(cache.join(format!("{name}.{ext}")));
            }
        } else {
            ds.save(&cache, name, &hash)?;
        }
        eprintln!("{name}: {} windows from {} recordings", ds.len(), recs.len());
    }
    let manifest = json!({"key": key, "windows": counts});
    write_text(&manifest_path, &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

pub fn train(r: &Resolved, force: bool) -> Result<()> {
    let dir = out_dir(r);
    if is_nonempty_dir(&dir) {
        if !force {
            return Err(Error::Config(format!("output directory {} already exists; pass --force to replace it", dir.display())));
        }
        clear_dir(&dir)?;
    }
    let splits = load_splits(r)?;
    let names = r.schema.class_names();
    let seed = r.config.train.seed;
    let run = train_and_evaluate(&r.config.experiment(), &splits.train, &splits.val, &splits.test, seed, &names)?;
    write_text(&dir.join(CONFIG_FILE), &r.config.to_json())?;
    save_run(&dir, r, &run.model, seed, &run.history, run.normalization)?;
    let report = EvalReport::single(&r.schema.name, vec![run.sample, run.window]);
    write_report(&dir, "report", &report)?;
    eprintln!(
        "best epoch {} of {} (validation F1 {:.4})",
        run.history.best_epoch,
        run.history.epochs.len(),
        run.history.best_score
    );
    print!("{}", report.to_table());
    Ok(())
}

pub fn eval(r: &Resolved, checkpoint: &Path, protocols: &[Protocol], which: PartChoice) -> Result<()> {
    let (ck, meta) = compatible_checkpoint(r, checkpoint)?;
    let t = ck.model.config.window_len;
    let recs = normalized(&part(load_splits(r)?, which), meta.normalization.as_ref())?;
    let recs = usable(recs, t, which.name())?;
    let names = r.schema.class_names();
    let reports = protocols
        .iter()
        .map(|&p| ProtocolReport::new(p, evaluate_recordings(&ck.model, &recs, t, p)?, &names))
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::single(&r.schema.name, reports);
    write_report(&out_dir(r), &format!("eval-{}", which.name()), &report)?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn loso(r: &Resolved, force: bool) -> Result<()> {
    let dir = out_dir(r);
    let config_path = dir.join(CONFIG_FILE);
    let config_json = r.config.to_json();
    if let Ok(previous) = fs::read_to_string(&config_path) {
        if previous != config_json {
            if !force {
                return Err(Error::Config(format!(
                    "{} holds a run with a different config; pass --force to replace it",
                    dir.display()
                )));
            }
            clear_dir(&dir)?;
        }
    } else if is_nonempty_dir(&dir) {
        if !force {
            return Err(Error::Config(format!("output directory {} already exists; pass --force to replace it", dir.display())));
        }
        clear_dir(&dir)?;
    }
    write_text(&config_path, &config_json)?;
    let recs = load_recordings(r)?;
    let folds = loso_splits(&recs)?;
    let exp = r.config.experiment();
    let names = r.schema.class_names();
    let mut scores = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let fold_dir = dir.join("folds").join(format!("{i:02}-{}", fold.held_out));
        if fold_dir.join(FOLD_DONE).exists() {
            let s: FoldScores = serde_json::from_slice(&read_file(&fold_dir.join("fold.json"))?)?;
            eprintln!("fold {i} ({}): already complete", fold.held_out);
            scores.push(s);
            continue;
        }
        if fold_dir.exists() {
            clear_dir(&fold_dir)?;
        }
        eprintln!("fold {i} ({}): training", fold.held_out);
        let run = run_fold(&recs, fold, i, &exp, r.config.train.seed, &names)?;
        let s = run.scores();
        let out = run.outcome;
        save_run(&fold_dir, r, &out.model, run.seed, &out.history, out.normalization)?;
        write_report(&fold_dir, "report", &EvalReport::single(&fold.held_out, vec![out.sample, out.window]))?;
        write_text(&fold_dir.join("fold.json"), &(serde_json::to_string_pretty(&s)? + "\n"))?;
        write_text(&fold_dir.join(FOLD_DONE), "")?;
        scores.push(s);
    }
    let summary = EvalReport::loso(&r.schema.name, scores)?;
    write_report(&dir, "summary", &summary)?;
    print!("{}", summary.to_table());
    Ok(())
}

pub fn sweep(r: &Resolved, sizes: &[usize]) -> Result<()> {
    for &s in sizes {
        ModelConfig { window_len: s, ..r.config.model.clone() }.validate()?;
    }
    let splits = load_splits(r)?;
    let rows = window_size_sweep(
        sizes,
        &r.config.experiment(),
        &splits.train,
        &splits.val,
        &splits.test,
        r.config.train.seed,
        &r.schema.class_names(),
    )?;
    let csv = sweep_csv(&rows);
    write_text(&out_dir(r).join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn parse_classes(names: &[String], wanted: &[String]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|w| {
            names
                .iter()
                .position(|n| n == w)
                .or_else(|| w.parse::<usize>().ok().filter(|&i| i < names.len()))
                .ok_or_else(|| Error::Config(format!("unknown class {w:?}")))
        })
        .collect()
}

pub fn attention_maps(r: &Resolved, checkpoint: &Path, classes: &[String], which: PartChoice) -> Result<()> {
    let (ck, meta) = compatible_checkpoint(r, checkpoint)?;
    let names = r.schema.class_names();
    let filter = if classes.is_empty() { None } else { Some(parse_classes(&names, classes)?) };
    let recs = normalized(&part(load_splits(r)?, which), meta.normalization.as_ref())?;
    let windows = window_set(r, &recs)?;
    if windows.is_empty() {
        return Err(Error::Protocol(format!("the {} split produced no windows", which.name())));
    }
    let summary = class_attention_maps(&ck.model, &windows, filter.as_deref())?;
    for &k in &summary.skipped {
        eprintln!("notice: no window was predicted as {}; skipped", names[k]);
    }
    let dir = out_dir(r).join("attention");
    let sensors = r.schema.sensor_names();
    for m in &summary.maps {
        write_text(&dir.join(format!("{:02}-{}.csv", m.class, file_stem(&names[m.class]))), &m.to_csv(&sensors))?;
        eprintln!("{}: {} windows", names[m.class], m.windows);
    }
    let profiles = profiles_csv(&summary.maps, &sensors, &names);
    write_text(&dir.join("profiles.csv"), &profiles)?;
    print!("{profiles}");
    Ok(())
}

/// Settings of the `synth` command.
#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub subjects: usize,
    pub channels: usize,
    pub classes: usize,
    pub informative: usize,
    pub segments: usize,
    pub seed: u64,
}

/// Writes a planted-signal dataset with its schema and a small ready-to-run
/// config into `dir`.
pub fn synth(dir: &Path, o: &SynthOptions) -> Result<()> {
    if o.subjects < 2 {
        return Err(Error::Config("synth needs at least 2 subjects".into()));
    }
    let spec = PlantedSpec::new(o.channels, o.classes, o.informative)?;
    let rate = 25.0;
    let schema = planted_schema(&spec, rate);
    let mut rng = Rng::new(o.seed);
    let ids: Vec<String> = (1..=o.subjects).map(|i| format!("subject{i:02}")).collect();
    for (i, id) in ids.iter().enumerate() {
        let segments: Vec<(usize, usize)> = (0..o.segments).map(|s| ((s + i) % o.classes, 40 + rng.below(41))).collect();
        let rec = planted_recording(&spec, id, &segments, rate, rng.next_u64())?;
        write_text(&dir.join("data").join(format!("{id}.csv")), &to_delimited(&rec))?;
    }
    write_text(&dir.join("schema.json"), &(serde_json::to_string_pretty(&schema)? + "\n"))?;
    let config = json!({
        "schema": "schema.json",
        "data": ["data"],
        "preprocess": {"keep_every": 1, "normalize": true},
        "window": {"overlap": 0.5, "labeling": "majority"},
        "split": {"test_subjects": [ids.last().expect("subjects")], "val_fraction": 0.2},
        "model": {"window_len": 16, "d_model": 16, "n_blocks": 1, "n_heads": 2, "k_filters": 4, "dropout": 0.1},
        "train": {"batch_size": 16, "max_epochs": 20, "patience": 5, "seed": o.seed, "mode": "window_wise"},
        "output": "runs/synthetic"
    });
    write_text(&dir.join("config.json"), &(serde_json::to_string_pretty(&config)? + "\n"))?;
    eprintln!("wrote {} recordings, schema.json and config.json to {}", ids.len(), dir.display());
    Ok(())
}
