//! Downstream evaluation: speaker-independent gender-balanced train/test
//! split, partition standardisation, linear SVM with speaker-grouped
//! cross-validated penalty search, and unweighted average recall.

mod manifest;
mod metrics;
mod pipeline;
mod split;
mod svm;

pub use manifest::{Label, Manifest, ManifestRecord};
pub use metrics::{confusion_matrix, recalls, uar, uar_from_confusion};
pub use pipeline::{compare_reports, evaluate, standardize_partitions, EvalConfig, EvalReport, Standardization};
pub use split::{speaker_folds, split_speaker_independent, SplitAssignment};
pub use svm::{primal, sample_penalties, select_c, train_svm, CvResult, SvmConfig, SvmModel, DECADE_GRID};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} speakers, got {got}")]
    TooFewSpeakers { need: usize, got: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("insufficient data for {folds}-fold cross-validation: {reason}")]
    InsufficientFolds { folds: usize, reason: String },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid penalty C = {0}")]
    InvalidC(f64),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("no features for utterance '{0}'")]
    MissingFeatures(String),
    #[error("empty partition")]
    EmptyPartition,
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
