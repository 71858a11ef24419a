//! Deterministic two-condition synthetic speech corpus.
//!
//! Each speaker gets a voice profile (base F0, spectral tilt, syllable rate,
//! jitter). An utterance is a band-limited harmonic source driven cycle by
//! cycle along a slowly drifting F0 contour, amplitude-modulated at the
//! syllable rate, coloured by a random per-take channel response and mixed
//! with white noise at a per-take SNR. The `load` condition raises F0,
//! jitter, speaking rate and noise level.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{write_wav_pcm16, AudioError, Waveform, CANONICAL_RATE};
use crate::eval::{EvalError, Label, Manifest, ManifestRecord};
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis parameter: {0}")]
    Invalid(String),
    #[error("cannot write corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Manifest(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub gender: String,
    pub base_f0: f64,
    /// Harmonic amplitude roll-off exponent, `a_h = h^-tilt`.
    pub tilt: f64,
    pub syllable_rate: f64,
    pub base_jitter: f64,
}

/// Multiplicative and additive shifts applied under load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadEffect {
    pub f0_gain: f64,
    pub jitter_add: f64,
    pub rate_gain: f64,
    pub noise_gain_db: f64,
}

impl Default for LoadEffect {
    fn default() -> Self {
        Self {
            f0_gain: 1.15,
            jitter_add: 0.02,
            rate_gain: 1.2,
            noise_gain_db: 6.0,
        }
    }
}

/// Knobs shared by all utterances of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub effect: LoadEffect,
    /// Noise RMS relative to the voiced signal RMS in the no-load condition;
    /// `None` disables noise.
    pub noise_db: Option<f64>,
    /// Width in dB of the uniform per-utterance offset added to `noise_db`
    /// (recording conditions vary from take to take).
    pub snr_spread_db: f64,
    /// Relative half-width of the per-utterance syllable-rate factor.
    pub rate_spread: f64,
    /// Bound in dB of the per-utterance channel colouring of the voiced
    /// source (a smooth random gain curve over log-frequency).
    pub coloration_db: f64,
    /// Multiplies every cycle-level perturbation (0 = perfectly periodic).
    pub jitter_scale: f64,
    /// Utterance duration range in seconds.
    pub duration: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            effect: LoadEffect::default(),
            noise_db: Some(-24.0),
            snr_spread_db: 12.0,
            rate_spread: 0.15,
            coloration_db: 36.0,
            jitter_scale: 1.0,
            duration: [1.0, 3.0],
        }
    }
}

impl SynthConfig {
    /// Noise-free, perturbation-free variant.
    pub fn clean() -> Self {
        Self {
            noise_db: None,
            jitter_scale: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let e = &self.effect;
        if !(e.f0_gain > 0.0 && e.rate_gain > 0.0 && e.jitter_add >= 0.0 && e.noise_gain_db.is_finite()) {
            return Err(SynthError::Invalid(format!("load effect {e:?}")));
        }
        if !(self.snr_spread_db >= 0.0 && self.coloration_db >= 0.0 && self.jitter_scale >= 0.0) {
            return Err(SynthError::Invalid("spreads and jitter scale must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.rate_spread) {
            return Err(SynthError::Invalid(format!("rate_spread {} outside [0, 1)", self.rate_spread)));
        }
        let [lo, hi] = self.duration;
        if !(0.5 <= lo && lo <= hi && hi <= 15.0) {
            return Err(SynthError::Invalid(format!("duration range [{lo}, {hi}] outside [0.5, 15]")));
        }
        Ok(())
    }
}

/// Deterministic profile of speaker `index`; even indices are female.
pub fn gen_speaker_profile(seed: u64, index: usize) -> SpeakerProfile {
    let mut r = rng::stream(seed, &[tag::SPEAKER, index as u64]);
    let female = index % 2 == 0;
    let base_f0 = if female {
        r.random_range(150.0..220.0)
    } else {
        r.random_range(90.0..150.0)
    };
    SpeakerProfile {
        speaker_id: format!("spk{index:03}"),
        gender: if female { "F" } else { "M" }.into(),
        base_f0,
        tilt: r.random_range(0.9..1.5),
        syllable_rate: r.random_range(3.0..6.0),
        base_jitter: r.random_range(0.002..0.01),
    }
}

const TABLE: usize = 4096;
const MAX_HARMONIC_HZ: f64 = 7000.0;

/// Smooth random log-gain over log-frequency: three cosine components
/// spanning 50 Hz..7 kHz, peak deviation up to `depth_db`.
#[derive(Debug, Clone, Copy)]
struct Coloration {
    amp_db: [f64; 3],
    phase: [f64; 3],
}

impl Coloration {
    fn draw<R: Rng + ?Sized>(depth_db: f64, rng: &mut R) -> Self {
        let mut c = Self {
            amp_db: [0.0; 3],
            phase: [0.0; 3],
        };
        for k in 0..3 {
            c.amp_db[k] = depth_db / 3.0 * rng.random_range(-1.0..=1.0);
            c.phase[k] = rng.random_range(0.0..2.0 * PI);
        }
        c
    }

    fn gain(&self, hz: f64) -> f64 {
        let x = (hz / 50.0).max(1.0).log2() / (MAX_HARMONIC_HZ / 50.0).log2();
        let db: f64 = (0..3)
            .map(|k| self.amp_db[k] * (2.0 * PI * (k + 1) as f64 * x + self.phase[k]).cos())
            .sum();
        10f64.powf(db / 20.0)
    }
}

/// One period of the band-limited glottal-like source, unit peak.
fn wavetable(tilt: f64, harmonics: usize, f0: f64, colour: &Coloration) -> Vec<f64> {
    let amps: Vec<f64> = (1..=harmonics)
        .map(|h| (h as f64).powf(-tilt) * colour.gain(h as f64 * f0))
        .collect();
    let mut t: Vec<f64> = (0..TABLE)
        .map(|i| {
            let ph = i as f64 / TABLE as f64;
            amps.iter()
                .enumerate()
                .map(|(k, a)| a * (2.0 * PI * (k + 1) as f64 * ph).sin())
                .sum()
        })
        .collect();
    let peak = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    t.iter_mut().for_each(|v| *v /= peak);
    t
}

fn lookup(table: &[f64], phase: f64) -> f64 {
    let x = phase * TABLE as f64;
    let i = x.floor() as usize % TABLE;
    let f = x - x.floor();
    table[i] * (1.0 - f) + table[(i + 1) % TABLE] * f
}

/// Synthesize one utterance at 16 kHz, peak-normalised to 0.9.
pub fn gen_utterance<R: Rng + ?Sized>(
    p: &SpeakerProfile,
    condition: Label,
    duration: f64,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<Waveform, SynthError> {
    if !(0.5..=15.0).contains(&duration) {
        return Err(SynthError::Invalid(format!("duration {duration} s outside [0.5, 15]")));
    }
    let load = condition == Label::Load;
    let e = &cfg.effect;
    let (f0, jitter, rate) = if load {
        (p.base_f0 * e.f0_gain, p.base_jitter + e.jitter_add, p.syllable_rate * e.rate_gain)
    } else {
        (p.base_f0, p.base_jitter, p.syllable_rate)
    };
    let jitter = jitter * cfg.jitter_scale;
    let shimmer = 0.04 * cfg.jitter_scale;
    let sr = CANONICAL_RATE as f64;
    let n = (duration * sr).round() as usize;
    let harmonics = ((MAX_HARMONIC_HZ / (f0 * 1.1)).floor() as usize).max(1);
    let colour = Coloration::draw(cfg.coloration_db, rng);
    let table = wavetable(p.tilt, harmonics, f0, &colour);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let gauss = |r: &mut R| -> f64 { std_normal.sample(r) };

    let rate = rate * (1.0 + cfg.rate_spread * rng.random_range(-1.0..=1.0));
    let snr_offset = cfg.snr_spread_db * rng.random_range(-0.5..=0.5);
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let drift_rate = rng.random_range(0.2..0.6);
    let am_phase = rng.random_range(0.0..2.0 * PI);

    let mut out = vec![0.0; n];
    let mut phase = 0.0f64;
    let mut period_gain = 1.0;
    let mut amp_gain = 1.0;
    for (i, y) in out.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let f = f0 * (1.0 + 0.03 * (2.0 * PI * drift_rate * t + drift_phase).sin()) / period_gain;
        phase += f / sr;
        if phase >= 1.0 {
            phase -= 1.0;
            period_gain = 1.0 + (jitter * gauss(rng)).clamp(-3.0 * jitter, 3.0 * jitter);
            amp_gain = 1.0 + (shimmer * gauss(rng)).clamp(-3.0 * shimmer, 3.0 * shimmer);
        }
        let env = 0.3 + 0.7 * (0.5 - 0.5 * (2.0 * PI * rate * t + am_phase).cos());
        *y = env * amp_gain * lookup(&table, phase);
    }
    if let Some(db) = cfg.noise_db {
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let level = rms * 10f64.powf((db + snr_offset + if load { e.noise_gain_db } else { 0.0 }) / 20.0);
        for y in out.iter_mut() {
            *y += level * gauss(rng);
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    Ok(Waveform::new(out, CANONICAL_RATE))
}

/// Balanced corpus: `n_speakers` speakers with `utts_per_condition`
/// utterances per condition, written as 16-bit WAVs under `out_dir/wav`
/// plus `out_dir/manifest.csv`.
pub fn gen_corpus(n_speakers: usize, utts_per_condition: usize, out_dir: &Path, seed: u64) -> Result<Manifest, SynthError> {
    gen_corpus_with(n_speakers, utts_per_condition, out_dir, seed, &SynthConfig::default())
}

pub fn gen_corpus_with(
    n_speakers: usize,
    utts_per_condition: usize,
    out_dir: &Path,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<Manifest, SynthError> {
    if n_speakers < 4 {
        return Err(SynthError::Invalid(format!("need at least 4 speakers, got {n_speakers}")));
    }
    if utts_per_condition == 0 {
        return Err(SynthError::Invalid("utts_per_condition must be >= 1".into()));
    }
    cfg.validate()?;
    let [lo, hi] = cfg.duration;
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let profiles: Vec<SpeakerProfile> = (0..n_speakers).map(|i| gen_speaker_profile(seed, i)).collect();
    let jobs: Vec<(usize, Label, usize)> = (0..n_speakers)
        .flat_map(|s| {
            [Label::NoLoad, Label::Load]
                .into_iter()
                .flat_map(move |l| (0..utts_per_condition).map(move |k| (s, l, k)))
        })
        .collect();
    let records: Vec<ManifestRecord> = jobs
        .par_iter()
        .map(|&(s, label, k)| {
            let p = &profiles[s];
            let mut r = rng::stream(seed, &[tag::UTTERANCE, s as u64, label.index() as u64, k as u64]);
            let dur = if hi > lo { r.random_range(lo..hi) } else { lo };
            let dur = (dur * 100.0).round() / 100.0;
            let w = gen_utterance(p, label, dur, cfg, &mut r)?;
            let id = format!("{}_{}_{k:02}", p.speaker_id, label.as_str());
            let path: PathBuf = wav_dir.join(format!("{id}.wav"));
            write_wav_pcm16(&path, &w)?;
            Ok(ManifestRecord {
                utterance_id: id,
                path,
                speaker: p.speaker_id.clone(),
                gender: p.gender.clone(),
                label,
                duration: Some(dur),
            })
        })
        .collect::<Result<_, SynthError>>()?;
    let manifest = Manifest::new(records);
    let mut buf = Vec::new();
    manifest.write_csv(&mut buf, Some(out_dir))?;
    crate::config::write_atomic(&out_dir.join("manifest.csv"), &buf)?;
    Ok(manifest)
}
