//! Loading, preparing and splitting the recordings named by a config.

use std::fs;
use std::path::{Path, PathBuf};

use har_core::data::{load_recording_file, make_windows, normalize, prepare_recording, split_benchmark, NormStats, RawRecording, Splits, WindowedDataset};
use har_core::{Error, Result};

use crate::config::Resolved;

/// Expands directories to their regular files (sorted) and keeps files as given.
pub fn data_files(paths: &[String]) -> Result<Vec<PathBuf>> {
    if paths.is_empty() {
        return Err(Error::Config("no data paths given".into()));
    }
    let mut files = Vec::new();
    for p in paths {
        let path = Path::new(p);
        let meta = fs::metadata(path).map_err(|e| Error::io(path.display(), e))?;
        if meta.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path.display(), e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.to_path_buf());
        }
    }
    Ok(files)
}

/// Parses, imputes and downsamples every recording.
pub fn load_recordings(r: &Resolved) -> Result<Vec<RawRecording>> {
    let mut schema = r.schema.clone();
    schema.null_policy = r.config.preprocess.null_policy.expect("resolved");
    let keep_every = r.config.preprocess.keep_every.expect("resolved");
    data_files(&r.config.data)?
        .iter()
        .map(|f| prepare_recording(&load_recording_file(&schema, f)?, keep_every))
        .collect()
}

pub fn load_splits(r: &Resolved) -> Result<Splits> {
    split_benchmark(&load_recordings(r)?, &r.config.split_plan()?)
}

pub fn normalized(recs: &[RawRecording], stats: Option<&NormStats>) -> Result<Vec<RawRecording>> {
    match stats {
        Some(s) => recs.iter().map(|r| Ok(normalize(r, Some(s))?.0)).collect(),
        None => Ok(recs.to_vec()),
    }
}

/// Window-wise windows over every recording at least one window long.
pub fn window_set(r: &Resolved, recs: &[RawRecording]) -> Result<WindowedDataset> {
    let c = &r.config;
    let t = c.model.window_len;
    let mut ds = WindowedDataset::empty(t, c.model.channels);
    for rec in recs.iter().filter(|rec| rec.len() >= t) {
        ds.extend(&make_windows(rec, t, c.window.overlap.expect("resolved"), c.window.labeling, c.preprocess.null_policy.expect("resolved"))?)?;
    }
    Ok(ds)
}
