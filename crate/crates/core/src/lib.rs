//! Self-attention model for human activity recognition from wearable
//! inertial sensors, with the data pipeline, training loop and evaluation
//! protocols around it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, ErrorKind, Result};
