use std::f64::consts::PI;

use super::pitch::{PitchConfig, PitchTracker};
use super::{FeatureError, N_DESCRIPTORS, SCHEMA_ID};
use crate::audio::{mel_filterbank, stft, Waveform, CANONICAL_RATE};

/// Frame-level descriptors, `frames x n_descriptors` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LldMatrix {
    pub values: Vec<f64>,
    pub frames: usize,
    pub n_descriptors: usize,
    pub schema_id: String,
    pub voiced_mask: Vec<bool>,
}

impl LldMatrix {
    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.n_descriptors + d]
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        (0..self.frames).map(|t| self.get(t, d)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LldConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub pitch: PitchConfig,
    pub mfcc_bands: usize,
    pub mfcc_fmin: f64,
    pub mfcc_fmax: f64,
    pub rolloff: f64,
    pub db_floor_rms: f64,
    pub min_duration_ms: f64,
}

impl Default for LldConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 160,
            pitch: PitchConfig::default(),
            mfcc_bands: 26,
            mfcc_fmin: 20.0,
            mfcc_fmax: 8000.0,
            rolloff: 0.85,
            db_floor_rms: 1e-10,
            min_duration_ms: 100.0,
        }
    }
}

const N_MFCC: usize = 13;

/// Orthonormal DCT-II basis, `N_MFCC x bands`.
fn dct_basis(bands: usize) -> Vec<f64> {
    let mut basis = vec![0.0; N_MFCC * bands];
    for k in 0..N_MFCC {
        let scale = if k == 0 {
            (1.0 / bands as f64).sqrt()
        } else {
            (2.0 / bands as f64).sqrt()
        };
        for m in 0..bands {
            basis[k * bands + m] = scale * (PI * k as f64 * (m as f64 + 0.5) / bands as f64).cos();
        }
    }
    basis
}

/// Compute the 23 `CPS-115` descriptors every `hop` samples.
///
/// Order: F0, voicing probability, RMS energy (dB), zero-crossing rate,
/// spectral centroid (Hz), spectral flux, 85% spectral rolloff (Hz), MFCC
/// 0-12, local jitter, local shimmer, HNR (dB). F0, jitter, shimmer and HNR
/// are zero on unvoiced frames.
pub fn extract_lld(w: &Waveform, cfg: &LldConfig) -> Result<LldMatrix, FeatureError> {
    if w.sample_rate != CANONICAL_RATE {
        return Err(FeatureError::SampleRate {
            expected: CANONICAL_RATE,
            got: w.sample_rate,
        });
    }
    let duration_ms = 1000.0 * w.duration_secs();
    if duration_ms < cfg.min_duration_ms || w.len() < cfg.frame_len {
        return Err(FeatureError::TooShort {
            duration_ms,
            min_ms: cfg.min_duration_ms,
        });
    }
    let spec = stft(w, cfg.frame_len, cfg.hop)?;
    let fb = mel_filterbank(
        cfg.mfcc_bands,
        cfg.mfcc_fmin,
        cfg.mfcc_fmax.min(w.sample_rate as f64 / 2.0),
        spec.fft_size,
        w.sample_rate,
    )?;
    let dct = dct_basis(cfg.mfcc_bands);
    let mut tracker = PitchTracker::new(cfg.pitch, w.sample_rate, cfg.frame_len);

    let frames = spec.frames;
    let mut values = Vec::with_capacity(frames * N_DESCRIPTORS);
    let mut voiced_mask = Vec::with_capacity(frames);
    let mut prev_norm: Option<Vec<f64>> = None;
    let mut log_bands = vec![0.0; cfg.mfcc_bands];

    for t in 0..frames {
        let start = t * cfg.hop;
        let frame = &w.samples[start..start + cfg.frame_len];
        let mag = spec.frame(t);

        let pitch = tracker.analyse(frame);

        let rms = (frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64).sqrt();
        let rms_db = 20.0 * rms.max(cfg.db_floor_rms).log10();
        let crossings = frame
            .windows(2)
            .filter(|p| p[0] * p[1] < 0.0)
            .count();
        let zcr = crossings as f64 / (frame.len() - 1) as f64;

        let mag_sum: f64 = mag.iter().sum();
        let centroid = if mag_sum > 0.0 {
            mag.iter()
                .enumerate()
                .map(|(k, m)| spec.bin_hz(k) * m)
                .sum::<f64>()
                / mag_sum
        } else {
            0.0
        };
        let power: Vec<f64> = mag.iter().map(|m| m * m).collect();
        let power_sum: f64 = power.iter().sum();
        let rolloff = if power_sum > 0.0 {
            let target = cfg.rolloff * power_sum;
            let mut acc = 0.0;
            let k = power
                .iter()
                .position(|p| {
                    acc += p;
                    acc >= target
                })
                .unwrap_or(power.len() - 1);
            spec.bin_hz(k)
        } else {
            0.0
        };
        let norm = power_sum.sqrt();
        let unit: Vec<f64> = if norm > 0.0 {
            mag.iter().map(|m| m / norm).collect()
        } else {
            vec![0.0; mag.len()]
        };
        let flux = match &prev_norm {
            Some(prev) => unit
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            None => 0.0,
        };
        prev_norm = Some(unit);

        for (b, out) in log_bands.iter_mut().enumerate() {
            let row = &fb[b * spec.n_bins..(b + 1) * spec.n_bins];
            let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            *out = e.max(1e-10).ln();
        }

        values.push(pitch.f0);
        values.push(pitch.voicing_prob);
        values.push(rms_db);
        values.push(zcr);
        values.push(centroid);
        values.push(flux);
        values.push(rolloff);
        for k in 0..N_MFCC {
            let basis = &dct[k * cfg.mfcc_bands..(k + 1) * cfg.mfcc_bands];
            values.push(basis.iter().zip(&log_bands).map(|(a, b)| a * b).sum());
        }
        values.push(pitch.jitter);
        values.push(pitch.shimmer);
        values.push(pitch.hnr);
        voiced_mask.push(pitch.voiced);
    }
    debug_assert_eq!(values.len(), frames * N_DESCRIPTORS);
    Ok(LldMatrix {
        values,
        frames,
        n_descriptors: N_DESCRIPTORS,
        schema_id: SCHEMA_ID.to_string(),
        voiced_mask,
    })
}
