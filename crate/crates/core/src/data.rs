//! Manifest-driven loading: audio at the canonical rate, log-mel inputs and
//! handcrafted feature tables.

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{load_wav, resample, AudioError, FrontendConfig, LogMelSpectrogram, Waveform, CANONICAL_RATE};
use crate::eval::{Manifest, ManifestRecord};
use crate::features::{apply_functionals, column_names, extract_lld, FeatureError, FeatureTable, LldConfig, SCHEMA_ID};

/// A failure tied to one utterance.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("utterance '{id}': {source}")]
    Audio { id: String, source: AudioError },
    #[error("utterance '{id}': {source}")]
    Feature { id: String, source: FeatureError },
}

impl DataError {
    pub fn utterance(&self) -> &str {
        match self {
            DataError::Audio { id, .. } | DataError::Feature { id, .. } => id,
        }
    }
}

/// Read a manifest entry and bring it to 16 kHz.
pub fn load_utterance(rec: &ManifestRecord) -> Result<Waveform, DataError> {
    let wrap = |source| DataError::Audio {
        id: rec.utterance_id.clone(),
        source,
    };
    let w = load_wav(&rec.path).map_err(wrap)?;
    if w.sample_rate == CANONICAL_RATE {
        Ok(w)
    } else {
        resample(&w, CANONICAL_RATE).map_err(wrap)
    }
}

/// Waveform to CPS-115 vector.
pub fn supervision_features(id: &str, w: &Waveform, cfg: &LldConfig) -> Result<Vec<f64>, DataError> {
    let lld = extract_lld(w, cfg).map_err(|source| DataError::Feature {
        id: id.to_string(),
        source,
    })?;
    Ok(apply_functionals(&lld).values)
}

/// Log-mel spectrogram of one waveform.
pub fn logmel_of(id: &str, w: &Waveform, frontend: &FrontendConfig) -> Result<LogMelSpectrogram, DataError> {
    frontend.logmel(w).map_err(|source| DataError::Audio {
        id: id.to_string(),
        source,
    })
}

/// Per-utterance results in manifest order; the first failure (in manifest
/// order) wins so error reporting is deterministic.
pub fn map_manifest<T: Send>(
    m: &Manifest,
    f: impl Fn(&ManifestRecord) -> Result<T, DataError> + Sync + Send,
) -> Result<Vec<T>, DataError> {
    let results: Vec<Result<T, DataError>> = m.records.par_iter().map(f).collect();
    results.into_iter().collect()
}

/// CPS-115 table for every manifest utterance.
pub fn extract_feature_table(m: &Manifest, cfg: &LldConfig) -> Result<FeatureTable, DataError> {
    let rows = map_manifest(m, |r| {
        let w = load_utterance(r)?;
        supervision_features(&r.utterance_id, &w, cfg)
    })?;
    Ok(FeatureTable {
        schema_id: SCHEMA_ID.to_string(),
        columns: column_names(),
        ids: m.records.iter().map(|r| r.utterance_id.clone()).collect(),
        rows,
    })
}
