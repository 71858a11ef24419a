//! Audio front-end: WAV decoding, resampling, short-time spectra and log-mel
//! spectrograms.
//!
//! Everything here is a pure function of its inputs.

mod resample;
mod spectral;
mod wav;

pub use resample::resample;
pub use spectral::{
    hann_window, hz_to_mel, logmel, mel_filterbank, mel_to_hz, stft, LogMelSpectrogram, MelParams,
    Spectrogram,
};
pub use wav::{load_wav, read_wav, write_wav_pcm16};

use thiserror::Error;

/// Canonical sample rate used throughout the pipeline.
pub const CANONICAL_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    NotFound(String),
    #[error("i/o error reading audio: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed WAV header: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("waveform has {len} samples, shorter than one frame of {frame_len}")]
    TooShort { len: usize, frame_len: usize },
    #[error("invalid mel frequency range: fmin={fmin} fmax={fmax} (nyquist {nyquist})")]
    InvalidRange { fmin: f64, fmax: f64, nyquist: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute amplitude.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Multiply every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }
}

/// Settings that turn a waveform into the network's log-mel input.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub mel_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub floor_eps: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        let mel = MelParams::default();
        Self {
            sample_rate: CANONICAL_RATE,
            frame_len: 1024,
            hop: 160,
            mel_bins: mel.mel_bins,
            fmin: mel.fmin,
            fmax: mel.fmax,
            floor_eps: mel.floor_eps,
        }
    }
}

impl FrontendConfig {
    pub fn mel_params(&self) -> MelParams {
        MelParams {
            mel_bins: self.mel_bins,
            fmin: self.fmin,
            fmax: self.fmax,
            floor_eps: self.floor_eps,
        }
    }

    /// Number of frames covering `secs` seconds of audio.
    pub fn frames_for(&self, secs: f64) -> usize {
        let n = (secs * self.sample_rate as f64).round() as usize;
        if n < self.frame_len {
            1
        } else {
            1 + (n - self.frame_len) / self.hop
        }
    }

    /// Resample to the configured rate (if needed), then STFT and log-mel.
    pub fn logmel(&self, w: &Waveform) -> Result<LogMelSpectrogram, AudioError> {
        let w = if w.sample_rate == self.sample_rate {
            std::borrow::Cow::Borrowed(w)
        } else {
            std::borrow::Cow::Owned(resample(w, self.sample_rate)?)
        };
        logmel(&stft(&w, self.frame_len, self.hop)?, &self.mel_params())
    }
}
