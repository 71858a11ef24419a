//! Handcrafted acoustic features under the fixed `CPS-115` schema.
//!
//! 23 frame-level descriptors are computed every 10 ms and summarised over
//! the utterance by 5 functionals, giving a 115-dimensional vector in
//! descriptor-major, functional-minor order. The same vectors serve as the
//! handcrafted baseline representation and, once standardised, as the
//! regression targets of the supervised loss during pretraining.

mod functionals;
mod lld;
mod pitch;
mod standardizer;
mod table;

pub use functionals::{apply_functionals, percentile, Functional, FUNCTIONALS};
pub use lld::{extract_lld, LldConfig, LldMatrix};
pub use pitch::{cycle_perturbation, PitchConfig, PitchFrame, PitchTracker};
pub use standardizer::{fit_standardizer, standardize, unstandardize, FeatureStandardizer, STD_FLOOR};
pub use table::FeatureTable;

use thiserror::Error;

use crate::audio::{AudioError, Waveform};

pub const SCHEMA_ID: &str = "CPS-115";

/// Descriptor names in schema order.
pub const DESCRIPTORS: [&str; 23] = [
    "f0",
    "voicing_prob",
    "rms_db",
    "zcr",
    "spectral_centroid",
    "spectral_flux",
    "spectral_rolloff85",
    "mfcc0",
    "mfcc1",
    "mfcc2",
    "mfcc3",
    "mfcc4",
    "mfcc5",
    "mfcc6",
    "mfcc7",
    "mfcc8",
    "mfcc9",
    "mfcc10",
    "mfcc11",
    "mfcc12",
    "jitter_local",
    "shimmer_local",
    "hnr",
];

pub const N_DESCRIPTORS: usize = DESCRIPTORS.len();
pub const D_SUP: usize = N_DESCRIPTORS * FUNCTIONALS.len();

/// Descriptor indices that are only defined on voiced frames.
pub const VOICED_ONLY: [usize; 4] = [0, 20, 21, 22];

pub fn is_voiced_only(descriptor: usize) -> bool {
    VOICED_ONLY.contains(&descriptor)
}

/// Column names `descriptor.functional` in schema order.
pub fn column_names() -> Vec<String> {
    DESCRIPTORS
        .iter()
        .flat_map(|d| FUNCTIONALS.iter().map(move |f| format!("{d}.{}", f.name())))
        .collect()
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("input too short for feature extraction: {duration_ms:.1} ms (need >= {min_ms} ms)")]
    TooShort { duration_ms: f64, min_ms: f64 },
    #[error("expected {expected} Hz audio, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error("need at least 2 vectors to fit a standardizer, got {0}")]
    TooFewVectors(usize),
    #[error("schema mismatch: expected '{expected}', got '{got}'")]
    SchemaMismatch { expected: String, got: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature table: {0}")]
    Table(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Utterance-level handcrafted feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionVector {
    pub values: Vec<f64>,
    pub schema_id: String,
}

impl SupervisionVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Waveform -> LLDs -> functionals with the default configuration.
pub fn extract_supervision(w: &Waveform) -> Result<SupervisionVector, FeatureError> {
    let lld = extract_lld(w, &LldConfig::default())?;
    Ok(apply_functionals(&lld))
}
