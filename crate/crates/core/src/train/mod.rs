//! Cross-entropy loss, the Adam optimizer and the epoch loop.

pub mod adam;
pub mod loss;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use loss::{cross_entropy, cross_entropy_grad, inverse_frequency_weights};
pub use trainer::{
    batch_gradients, train, training_windows, EpochRecord, History, TrainMode, TrainOutcome, TrainRunConfig, Validation, HISTORY_HEADER,
};
