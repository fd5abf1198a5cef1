//! EMG-based wrist intent pipeline: gesture recognition and force
//! estimation from 8-channel surface EMG, with a causal streaming engine
//! mapping predictions to actuator commands.
//!
//! Stages, in order: envelope extraction (rectify, causal 5 Hz low-pass,
//! MVC-percentile normalization), mRMR channel selection, sliding-window
//! feature expansion (time + spatial statistics, Burg AR coefficients),
//! standardization and PCA at 95% explained variance, a 10-NN gesture
//! classifier and a regression tree for normalized force. A deterministic
//! synthetic session generator stands in for private recordings, and the
//! evaluation harness reproduces the channel-count trade-off studies with
//! leakage-safe 5-fold cross-validation.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod reduction;
pub mod resample;
pub mod selection;
pub mod stream;
pub mod synthgen;
pub mod types;

pub use error::{Error, Result};
pub use types::{ChannelId, Dataset, EmgFrame, GestureLabel, Hand, Sequence};
