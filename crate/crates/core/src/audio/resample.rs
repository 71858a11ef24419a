use std::f64::consts::PI;

use super::{AudioError, Waveform};

/// Zero crossings of the interpolation kernel on each side.
const HALF_ZEROS: f64 = 32.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos()
}

/// Band-limited (Blackman-windowed sinc) resampling.
///
/// The output has `round(len * target_sr / sample_rate)` samples. Equal rates
/// return an exact copy.
pub fn resample(w: &Waveform, target_sr: u32) -> Result<Waveform, AudioError> {
    if target_sr == 0 {
        return Err(AudioError::InvalidParam("target sample rate must be > 0".into()));
    }
    if target_sr == w.sample_rate {
        return Ok(w.clone());
    }
    let ratio = target_sr as f64 / w.sample_rate as f64;
    let out_len = (w.len() as f64 * ratio).round() as usize;
    // cutoff in cycles per input sample, relative to input Nyquist
    let cutoff = ROLLOFF * ratio.min(1.0);
    let half_width = HALF_ZEROS / cutoff;
    let x = &w.samples;
    let n_in = x.len() as isize;

    let samples = (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = ((t - half_width).ceil() as isize).max(0);
            let hi = ((t + half_width).floor() as isize).min(n_in - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let d = t - k as f64;
                acc += x[k as usize] * cutoff * sinc(cutoff * d) * blackman(d / half_width);
            }
            acc
        })
        .collect();
    Ok(Waveform::new(samples, target_sr))
}
