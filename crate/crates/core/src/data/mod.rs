//! Ingestion, imputation, resampling, normalisation, windowing and splits.

pub mod recording;
pub mod schema;
pub mod split;
pub mod synthetic;
pub mod windows;

pub use recording::{downsample, impute_missing, load_recording, load_recording_file, normalize, prepare_recording, Label, NormStats, RawRecording};
pub use schema::{ColumnRole, ColumnSpec, DatasetSchema, LabelEntry, NullPolicy};
pub use split::{loso_splits, split_benchmark, split_tail, Fold, SplitPlan, Splits};
pub use windows::{make_boundary_padded_windows, make_windows, make_windows_with_stride, stride_for, window_label, Labeling, Span, WindowedDataset};
