//! Macro F1, the sample-wise and window-wise test protocols, LOSO and
//! window-size sweeps, and per-class attention maps.

pub mod attention;
pub mod experiment;
pub mod metrics;
pub mod protocols;
pub mod report;

pub use attention::{class_attention_maps, profiles_csv, AttentionSummary, ClassAttention};
pub use experiment::{
    apply_normalization, fold_seed, run_fold, run_loso, sweep_csv, train_and_evaluate, window_size_sweep, Experiment, FoldRun, RunOutcome,
    SweepRow, SWEEP_HEADER,
};
pub use metrics::{ClassScores, ConfusionMatrix};
pub use protocols::{evaluate_recordings, evaluate_sample_wise, evaluate_window_wise, Classifier, Protocol};
pub use report::{ClassRow, EvalReport, FoldScores, ProtocolReport};
