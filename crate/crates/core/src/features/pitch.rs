//! Frame-level pitch, voicing and voice-quality measures.
//!
//! F0 comes from the normalised autocorrelation of a centre-clipped frame with
//! parabolic peak interpolation. Jitter and shimmer are measured on cycle
//! marks obtained by period-synchronous peak picking guided by that F0; HNR
//! comes from the autocorrelation peak of the unclipped frame.

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    /// Minimum clipped-autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    /// Centre-clipping level relative to the frame peak.
    pub clip_ratio: f64,
    /// Frames whose peak amplitude is below this are treated as silence.
    pub silence_peak: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            f0_min: 60.0,
            f0_max: 450.0,
            voicing_threshold: 0.45,
            clip_ratio: 0.3,
            silence_peak: 1e-4,
        }
    }
}

/// Pitch analysis of one frame. `f0`, `jitter`, `shimmer` and `hnr` are 0
/// when the frame is unvoiced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PitchFrame {
    pub voiced: bool,
    pub voicing_prob: f64,
    pub f0: f64,
    pub jitter: f64,
    pub shimmer: f64,
    pub hnr: f64,
}

/// Reusable per-frame pitch analyser for a fixed frame length.
pub struct PitchTracker {
    cfg: PitchConfig,
    sample_rate: f64,
    frame_len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl PitchTracker {
    pub fn new(cfg: PitchConfig, sample_rate: u32, frame_len: usize) -> Self {
        let n = (2 * frame_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            cfg,
            sample_rate: sample_rate as f64,
            frame_len,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            buf: vec![Complex::new(0.0, 0.0); n],
        }
    }

    fn lag_range(&self) -> (usize, usize) {
        let lo = (self.sample_rate / self.cfg.f0_max).floor().max(2.0) as usize;
        let hi = (self.sample_rate / self.cfg.f0_min).ceil() as usize;
        (lo, hi.min(self.frame_len - 2))
    }

    /// Normalised autocorrelation `r(tau) = sum x[i] x[i+tau] /
    /// sqrt(sum_head x^2 * sum_tail x^2)` for `tau` in `0..=max_lag`.
    fn normalized_autocorr(&mut self, x: &[f64], max_lag: usize) -> Vec<f64> {
        let n = x.len();
        for (i, c) in self.buf.iter_mut().enumerate() {
            *c = Complex::new(if i < n { x[i] } else { 0.0 }, 0.0);
        }
        self.fwd.process(&mut self.buf);
        for c in self.buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inv.process(&mut self.buf);
        let scale = 1.0 / self.buf.len() as f64;

        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for v in x {
            prefix.push(prefix.last().unwrap() + v * v);
        }
        let total = prefix[n];
        (0..=max_lag)
            .map(|tau| {
                let head = prefix[n - tau];
                let tail = total - prefix[tau];
                let denom = (head * tail).sqrt();
                if denom > 0.0 {
                    self.buf[tau].re * scale / denom
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Analyse one frame of `frame_len` samples.
    pub fn analyse(&mut self, frame: &[f64]) -> PitchFrame {
        assert_eq!(frame.len(), self.frame_len);
        let mean = frame.iter().sum::<f64>() / frame.len() as f64;
        let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak < self.cfg.silence_peak {
            return PitchFrame::default();
        }
        let clip = self.cfg.clip_ratio * peak;
        let clipped: Vec<f64> = x
            .iter()
            .map(|&v| {
                if v > clip {
                    v - clip
                } else if v < -clip {
                    v + clip
                } else {
                    0.0
                }
            })
            .collect();
        let (lo, hi) = self.lag_range();
        let r = self.normalized_autocorr(&clipped, hi + 1);

        // local maxima inside the search range
        let peaks: Vec<usize> = (lo..=hi)
            .filter(|&t| r[t] > 0.0 && r[t] >= r[t - 1] && r[t] >= r[t + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&t| r[t]).reduce(f64::max) else {
            return PitchFrame::default();
        };
        // earliest peak close to the global maximum (avoids period doubling)
        let lag = *peaks.iter().find(|&&t| r[t] >= 0.9 * best).unwrap();
        let (offset, height) = parabolic(r[lag - 1], r[lag], r[lag + 1]);
        let voicing_prob = height.clamp(0.0, 1.0);
        if voicing_prob < self.cfg.voicing_threshold {
            return PitchFrame {
                voicing_prob,
                ..PitchFrame::default()
            };
        }
        let period = lag as f64 + offset;
        let f0 = self.sample_rate / period;

        let raw = self.normalized_autocorr(&x, lag + 1);
        let (_, raw_peak) = parabolic(raw[lag - 1], raw[lag], raw[lag + 1]);
        let harmonic = raw_peak.clamp(1e-4, 1.0 - 1e-6);
        let hnr = 10.0 * (harmonic / (1.0 - harmonic)).log10();

        let (jitter, shimmer) = cycle_perturbation(&x, period);
        PitchFrame {
            voiced: true,
            voicing_prob,
            f0,
            jitter,
            shimmer,
            hnr,
        }
    }
}

/// Vertex of the parabola through three equally spaced points, as
/// (offset from the middle point, height).
fn parabolic(left: f64, mid: f64, right: f64) -> (f64, f64) {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < 1e-300 {
        return (0.0, mid);
    }
    let offset = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
    (offset, mid - 0.25 * (left - right) * offset)
}

/// Local jitter and shimmer from period-synchronous cycle marks.
///
/// Successive marks are placed by waveform matching: the one-period segment
/// at the current mark is cross-correlated (normalised) against candidate
/// positions 0.75 to 1.25 periods later, refined to sub-sample precision.
/// Jitter is the mean absolute difference of consecutive periods over the
/// mean period; shimmer is the same for per-cycle peak amplitudes. Returns
/// zeros when fewer than three cycles fit in the signal.
pub fn cycle_perturbation(x: &[f64], period: f64) -> (f64, f64) {
    let n = x.len();
    if period < 2.0 || (n as f64) < 3.0 * period {
        return (0.0, 0.0);
    }
    let l = period.round() as usize;
    let first = (0..l).max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs())).unwrap();
    let mut marks = vec![first as f64];
    loop {
        let m = *marks.last().unwrap();
        let mi = m.round() as usize;
        let a = (m + 0.75 * period).ceil() as usize;
        let b = (m + 1.25 * period).floor() as usize;
        if b + 1 + l > n || a == 0 {
            break;
        }
        let tpl = &x[mi..mi + l];
        let e_tpl: f64 = tpl.iter().map(|v| v * v).sum();
        let ncc = |t: usize| -> f64 {
            let seg = &x[t..t + l];
            let num: f64 = tpl.iter().zip(seg).map(|(p, q)| p * q).sum();
            let e: f64 = seg.iter().map(|v| v * v).sum();
            let d = (e_tpl * e).sqrt();
            if d > 0.0 {
                num / d
            } else {
                0.0
            }
        };
        let scores: Vec<f64> = (a - 1..=b + 1).map(ncc).collect();
        let k = (1..scores.len() - 1)
            .max_by(|&i, &j| scores[i].total_cmp(&scores[j]))
            .unwrap();
        let (off, _) = parabolic(scores[k - 1], scores[k], scores[k + 1]);
        let t = (a - 1 + k) as f64 + off;
        marks.push(m + (t - mi as f64));
    }
    if marks.len() < 4 {
        return (0.0, 0.0);
    }
    let periods: Vec<f64> = marks.windows(2).map(|w| w[1] - w[0]).collect();
    let amps: Vec<f64> = marks
        .windows(2)
        .map(|w| {
            let lo = w[0].round() as usize;
            let hi = (w[1].round() as usize).min(n);
            x[lo..hi].iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
        })
        .collect();
    let mean_abs_diff =
        |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (v.len() - 1) as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let jitter = mean_abs_diff(&periods) / mean(&periods);
    let amp_mean = mean(&amps);
    let shimmer = if amp_mean > 0.0 {
        mean_abs_diff(&amps) / amp_mean
    } else {
        0.0
    };
    (jitter, shimmer)
}
