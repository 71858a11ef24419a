use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioError, Waveform};

/// Magnitude spectrogram, `frames x bins` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Vec<f64>,
    pub frames: usize,
    pub n_bins: usize,
    pub frame_len: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.bins[t * self.n_bins..(t + 1) * self.n_bins]
    }

    /// Centre frequency of bin `k` in Hz.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Log-mel spectrogram, `frames x mel_bins` row-major (time-major).
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Vec<f32>,
    pub frames: usize,
    pub mel_bins: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl LogMelSpectrogram {
    /// A spectrogram with the same frame parameters but new contents.
    pub fn with_values(&self, values: Vec<f32>, frames: usize) -> Self {
        debug_assert_eq!(values.len(), frames * self.mel_bins);
        Self {
            values,
            frames,
            ..self.clone()
        }
    }

    /// Bare matrix wrapper, used by tests and synthetic inputs.
    pub fn from_matrix(values: Vec<f32>, frames: usize, mel_bins: usize) -> Self {
        assert_eq!(values.len(), frames * mel_bins, "matrix size mismatch");
        Self {
            values,
            frames,
            mel_bins,
            frame_len: 0,
            hop: 0,
            fmin: 0.0,
            fmax: 0.0,
        }
    }

    pub fn at(&self, t: usize, m: usize) -> f32 {
        self.values[t * self.mel_bins + m]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.mel_bins)
    }
}

/// Mel filterbank and log compression settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelParams {
    pub mel_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub floor_eps: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            mel_bins: 64,
            fmin: 60.0,
            fmax: 7800.0,
            floor_eps: 1e-10,
        }
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed magnitude STFT. Frames lie strictly inside the signal:
/// `T = 1 + (N - frame_len) / hop`. Each frame is zero-padded to the next
/// power of two.
pub fn stft(w: &Waveform, frame_len: usize, hop: usize) -> Result<Spectrogram, AudioError> {
    if frame_len == 0 || hop == 0 {
        return Err(AudioError::InvalidParam(
            "frame_len and hop must be positive".into(),
        ));
    }
    if w.len() < frame_len {
        return Err(AudioError::TooShort {
            len: w.len(),
            frame_len,
        });
    }
    let frames = 1 + (w.len() - frame_len) / hop;
    let fft_size = frame_len.next_power_of_two();
    let n_bins = fft_size / 2 + 1;
    let window = hann_window(frame_len);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut bins = Vec::with_capacity(frames * n_bins);
    for t in 0..frames {
        let start = t * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < frame_len {
                Complex::new(w.samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        bins.extend(buf[..n_bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram {
        bins,
        frames,
        n_bins,
        frame_len,
        fft_size,
        hop,
        sample_rate: w.sample_rate,
    })
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank (`mel_bins x n_bins`, row-major) on linear-frequency
/// FFT bins, with edges equally spaced on the mel scale.
pub fn mel_filterbank(
    mel_bins: usize,
    fmin: f64,
    fmax: f64,
    fft_size: usize,
    sample_rate: u32,
) -> Result<Vec<f64>, AudioError> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
        return Err(AudioError::InvalidRange { fmin, fmax, nyquist });
    }
    if mel_bins == 0 {
        return Err(AudioError::InvalidParam("mel_bins must be >= 1".into()));
    }
    let n_bins = fft_size / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..mel_bins + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (mel_bins + 1) as f64))
        .collect();
    let mut fb = vec![0.0; mel_bins * n_bins];
    for m in 0..mel_bins {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let up = (f - lo) / (centre - lo);
            let down = (hi - f) / (hi - centre);
            fb[m * n_bins + k] = up.min(down).max(0.0);
        }
    }
    Ok(fb)
}

/// Apply a mel filterbank to the power spectrum and take `ln(max(e, eps))`.
pub fn logmel(s: &Spectrogram, params: &MelParams) -> Result<LogMelSpectrogram, AudioError> {
    let fb = mel_filterbank(
        params.mel_bins,
        params.fmin,
        params.fmax,
        s.fft_size,
        s.sample_rate,
    )?;
    let floor = params.floor_eps.max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(s.frames * params.mel_bins);
    for t in 0..s.frames {
        let frame = s.frame(t);
        for m in 0..params.mel_bins {
            let row = &fb[m * s.n_bins..(m + 1) * s.n_bins];
            let e: f64 = row.iter().zip(frame).map(|(w, a)| w * a * a).sum();
            values.push(e.max(floor).ln() as f32);
        }
    }
    Ok(LogMelSpectrogram {
        values,
        frames: s.frames,
        mel_bins: params.mel_bins,
        frame_len: s.frame_len,
        hop: s.hop,
        fmin: params.fmin,
        fmax: params.fmax,
    })
}
