//! Hybrid self-supervised speech representations for voice task-load
//! detection.
//!
//! The crate covers the whole experimental loop:
//!
//! * [`audio`]: WAV decoding, resampling, STFT and log-mel spectrograms.
//! * [`features`]: handcrafted low-level descriptors and functionals (the
//!   115-dimensional `CPS-115` schema) used both as a baseline representation
//!   and as regression targets during pretraining.
//! * [`augment`]: the two-view augmentation pipeline (log-mixup-exp against a
//!   memory of past inputs, random resize crop, per-view normalisation).
//! * [`nn`]: a small CNN encoder with projector/predictor heads, hand-written
//!   backpropagation, losses, Adam and checkpoints.
//! * [`train`]: the hybrid training loop that combines the bootstrap loss with
//!   a supervised loss toward handcrafted features, plus embedding extraction.
//! * [`eval`]: speaker-independent splits, standardisation, a linear SVM with
//!   cross-validated penalty search and unweighted average recall.
//! * [`synth`]: a deterministic two-condition synthetic corpus.
//! * [`cli`]: the `stressrep` command-line interface.

pub mod audio;
pub mod augment;
pub mod cli;
pub mod config;
pub mod data;
pub mod eval;
pub mod features;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod train;
