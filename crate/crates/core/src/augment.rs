//! Two-view augmentation for bootstrap training.
//!
//! Each view is produced by pre-normalisation with corpus statistics,
//! log-mixup-exp against a FIFO memory of past inputs, random resize crop on
//! a zero-padded virtual canvas, and per-view z-normalisation.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::LogMelSpectrogram;

const POST_NORM_FLOOR: f64 = 1e-8;

/// Corpus-level scalar statistics of log-mel values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl NormStats {
    /// Mean and population std over every cell of every spectrogram.
    pub fn fit<'a>(specs: impl IntoIterator<Item = &'a LogMelSpectrogram>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0f64, 0.0f64);
        let specs: Vec<_> = specs.into_iter().collect();
        for s in &specs {
            n += s.values.len();
            sum += s.values.iter().map(|&v| v as f64).sum::<f64>();
        }
        let mean = sum / n.max(1) as f64;
        for s in &specs {
            sq += s
                .values
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>();
        }
        Self {
            mean,
            std: (sq / n.max(1) as f64).sqrt().max(POST_NORM_FLOOR),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub mixup: bool,
    /// Upper bound of the mixing ratio, `lambda ~ U(0, alpha)`.
    pub alpha: f64,
    pub memory_capacity: usize,
    pub resize_crop: bool,
    /// Virtual canvas size relative to the input, as (time, frequency).
    pub canvas_scale: [f64; 2],
    pub time_scale: [f64; 2],
    pub freq_scale: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mixup: true,
            alpha: 0.4,
            memory_capacity: 2048,
            resize_crop: true,
            canvas_scale: [1.5, 1.0],
            time_scale: [0.6, 1.5],
            freq_scale: [0.6, 1.5],
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            mixup: false,
            resize_crop: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(format!("augment.alpha must be in [0, 1), got {}", self.alpha));
        }
        for (name, r) in [("time_scale", self.time_scale), ("freq_scale", self.freq_scale)] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return Err(format!("augment.{name} must satisfy 0 < lo <= hi"));
            }
        }
        if self.canvas_scale.iter().any(|&c| c < 1.0) {
            return Err("augment.canvas_scale entries must be >= 1".into());
        }
        Ok(())
    }
}

/// `(x - mean) / std` with corpus statistics.
pub fn pre_normalize(x: &LogMelSpectrogram, stats: &NormStats) -> LogMelSpectrogram {
    let values = x
        .values
        .iter()
        .map(|&v| ((v as f64 - stats.mean) / stats.std) as f32)
        .collect();
    x.with_values(values, x.frames)
}

/// Per-spectrogram z-normalisation with std clamped at 1e-8.
pub fn post_normalize(x: &LogMelSpectrogram) -> LogMelSpectrogram {
    let n = x.values.len() as f64;
    let mean = x.values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x
        .values
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(POST_NORM_FLOOR);
    x.with_values(
        x.values
            .iter()
            .map(|&v| ((v as f64 - mean) / std) as f32)
            .collect(),
        x.frames,
    )
}

/// FIFO of past (normalised) inputs for mixup.
#[derive(Debug, Clone, PartialEq)]
pub struct MixupMemory {
    capacity: usize,
    entries: VecDeque<LogMelSpectrogram>,
}

impl MixupMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, x: LogMelSpectrogram) {
        if self.capacity == 0 {
            return;
        }
        while self.entries.len() >= self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(x);
    }

    pub fn entries(&self) -> impl Iterator<Item = &LogMelSpectrogram> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> &LogMelSpectrogram {
        &self.entries[i]
    }
}

/// `ln((1 - lambda) e^x + lambda e^z)` elementwise.
pub fn log_mixup_exp(x: &LogMelSpectrogram, z: &LogMelSpectrogram, lambda: f64) -> LogMelSpectrogram {
    assert_eq!(x.shape(), z.shape(), "mixup partner shape mismatch");
    if lambda == 0.0 {
        return x.clone();
    }
    let values = x
        .values
        .iter()
        .zip(&z.values)
        .map(|(&a, &b)| {
            let (a, b) = (a as f64, b as f64);
            // factor out the max exponent for stability
            let m = a.max(b);
            (m + ((1.0 - lambda) * (a - m).exp() + lambda * (b - m).exp()).ln()) as f32
        })
        .collect();
    x.with_values(values, x.frames)
}

/// Draw a mixing ratio and a partner from memory. Returns `x` unchanged if
/// the memory is empty. Does not modify the memory.
pub fn mixup<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    mem: &MixupMemory,
    alpha: f64,
    rng: &mut R,
) -> LogMelSpectrogram {
    if mem.is_empty() || alpha <= 0.0 {
        return x.clone();
    }
    let lambda = rng.random_range(0.0..alpha);
    let z = mem.get(rng.random_range(0..mem.len()));
    log_mixup_exp(x, z, lambda)
}

/// Crop rectangle on the virtual canvas (canvas coordinates; the input
/// occupies `[pad_t, pad_t + T) x [pad_f, pad_f + M)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropWindow {
    pub canvas: (usize, usize),
    pub pad: (usize, usize),
    pub origin: (usize, usize),
    pub size: (usize, usize),
}

impl CropWindow {
    /// The window that covers exactly the input content.
    pub fn identity(x: &LogMelSpectrogram, canvas_scale: [f64; 2]) -> Self {
        let canvas = canvas_dims(x, canvas_scale);
        let pad = ((canvas.0 - x.frames) / 2, (canvas.1 - x.mel_bins) / 2);
        Self {
            canvas,
            pad,
            origin: pad,
            size: (x.frames, x.mel_bins),
        }
    }
}

fn canvas_dims(x: &LogMelSpectrogram, scale: [f64; 2]) -> (usize, usize) {
    (
        ((x.frames as f64 * scale[0]) as usize).max(x.frames),
        ((x.mel_bins as f64 * scale[1]) as usize).max(x.mel_bins),
    )
}

/// Draw a crop: sizes scale the input dimensions by `U(lo, hi)` (clipped to
/// the canvas), offsets are uniform over the canvas.
pub fn draw_crop<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> CropWindow {
    let base = CropWindow::identity(x, cfg.canvas_scale);
    let (ct, cf) = base.canvas;
    let st = rng.random_range(cfg.time_scale[0]..=cfg.time_scale[1]);
    let sf = rng.random_range(cfg.freq_scale[0]..=cfg.freq_scale[1]);
    let h = ((x.frames as f64 * st) as usize).clamp(1, ct);
    let w = ((x.mel_bins as f64 * sf) as usize).clamp(1, cf);
    let i = rng.random_range(0..=ct - h);
    let j = rng.random_range(0..=cf - w);
    CropWindow {
        origin: (i, j),
        size: (h, w),
        ..base
    }
}

/// Bilinear resize (corner-aligned) of a canvas crop back to the input shape.
/// Canvas cells outside the content are zero.
pub fn resize_crop(x: &LogMelSpectrogram, win: &CropWindow) -> LogMelSpectrogram {
    let (rows, cols) = x.shape();
    let canvas = |p: isize, q: isize| -> f64 {
        let r = p - win.pad.0 as isize;
        let c = q - win.pad.1 as isize;
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            x.at(r as usize, c as usize) as f64
        }
    };
    let coord = |i: usize, out: usize, start: usize, size: usize| -> f64 {
        if out <= 1 {
            start as f64
        } else {
            start as f64 + i as f64 * (size as f64 - 1.0) / (out as f64 - 1.0)
        }
    };
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let u = coord(i, rows, win.origin.0, win.size.0);
        let u0 = u.floor();
        let du = u - u0;
        for j in 0..cols {
            let v = coord(j, cols, win.origin.1, win.size.1);
            let v0 = v.floor();
            let dv = v - v0;
            let (p, q) = (u0 as isize, v0 as isize);
            let mut acc = (1.0 - du) * (1.0 - dv) * canvas(p, q);
            if dv > 0.0 {
                acc += (1.0 - du) * dv * canvas(p, q + 1);
            }
            if du > 0.0 {
                acc += du * (1.0 - dv) * canvas(p + 1, q);
                if dv > 0.0 {
                    acc += du * dv * canvas(p + 1, q + 1);
                }
            }
            values.push(acc as f32);
        }
    }
    x.with_values(values, rows)
}

pub fn random_resize_crop<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> LogMelSpectrogram {
    let win = draw_crop(x, cfg, rng);
    resize_crop(x, &win)
}

/// Two augmented views of one spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub view_a: LogMelSpectrogram,
    pub view_b: LogMelSpectrogram,
}

fn one_view<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    mem: &MixupMemory,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> LogMelSpectrogram {
    let mut v = if cfg.mixup {
        mixup(x, mem, cfg.alpha, rng)
    } else {
        x.clone()
    };
    if cfg.resize_crop {
        v = random_resize_crop(&v, cfg, rng);
    }
    post_normalize(&v)
}

/// Pre-normalise `x`, then build two independently augmented views. Both
/// views mix against the memory as it was before this call; the normalised
/// input is appended once afterwards.
pub fn make_views<R: Rng + ?Sized>(
    x: &LogMelSpectrogram,
    stats: &NormStats,
    mem: &mut MixupMemory,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> ViewPair {
    let x = pre_normalize(x, stats);
    let view_a = one_view(&x, mem, cfg, rng);
    let view_b = one_view(&x, mem, cfg, rng);
    if cfg.mixup {
        mem.push(x);
    }
    ViewPair { view_a, view_b }
}
