//! Hybrid pretraining: two augmented views per utterance, BYOL term against
//! an EMA target, supervised term against standardised handcrafted features,
//! Adam on the online network, checkpointing and a per-step loss log.
//!
//! All randomness is drawn from streams keyed by (seed, purpose, step,
//! sample), so a run resumed from a checkpoint makes exactly the draws of an
//! uninterrupted one.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{FrontendConfig, LogMelSpectrogram};
use crate::augment::{make_views, pre_normalize, AugmentConfig, MixupMemory, NormStats};
use crate::config::{write_atomic, RunConfig};
use crate::data::{self, DataError};
use crate::eval::Manifest;
use crate::features::{fit_standardizer, standardize, FeatureError, FeatureStandardizer, LldConfig, SupervisionVector, SCHEMA_ID};
use crate::nn::{
    ema_update, hybrid_loss, read_checkpoint, write_checkpoint, Adam, AdamConfig, Checkpoint, HybridLossConfig,
    LossParts, ModelConfig, ModelState, NnError, ParamSet, Tensor,
};
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite loss at step {step} (utterances: {ids:?})")]
    NonFinite { step: u64, ids: Vec<String> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    /// EMA decay of the target network (constant).
    pub tau: f64,
    pub alpha_ss: f64,
    pub alpha_sup: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Extra checkpoints every this many steps (0 = final only).
    pub checkpoint_interval: u64,
    /// Length of the random training crop.
    pub crop_secs: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            steps: 500,
            batch_size: 16,
            tau: 0.99,
            alpha_ss: 1.0,
            alpha_sup: 1.0,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            checkpoint_interval: 0,
            crop_secs: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> HybridLossConfig {
        HybridLossConfig {
            alpha_ss: self.alpha_ss,
            alpha_sup: self.alpha_sup,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err("train.steps and train.batch_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(format!("train.tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.lr > 0.0 && self.adam_eps > 0.0) {
            return Err("train.lr and train.adam_eps must be positive".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err("train.beta1 and train.beta2 must lie in [0, 1)".into());
        }
        if !(self.crop_secs > 0.0) {
            return Err("train.crop_secs must be positive".into());
        }
        self.loss().validate()
    }
}

/// One pretraining utterance: full log-mel spectrogram plus its
/// standardised supervision target.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub id: String,
    pub lms: LogMelSpectrogram,
    pub sup: Vec<f32>,
}

/// Everything derived from the corpus before training starts.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub items: Vec<TrainItem>,
    pub norm: NormStats,
    pub standardizer: FeatureStandardizer,
}

/// Load audio, compute log-mels and CPS-115 vectors (in parallel), fit the
/// supervision standardiser and the log-mel normalisation statistics.
pub fn prepare_corpus(m: &Manifest, frontend: &FrontendConfig, lld: &LldConfig) -> Result<PreparedCorpus, TrainError> {
    let raw = data::map_manifest(m, |r| {
        let w = data::load_utterance(r)?;
        let lms = data::logmel_of(&r.utterance_id, &w, frontend)?;
        let sup = data::supervision_features(&r.utterance_id, &w, lld)?;
        Ok((r.utterance_id.clone(), lms, sup))
    })?;
    let vectors: Vec<SupervisionVector> = raw
        .iter()
        .map(|(_, _, s)| SupervisionVector {
            values: s.clone(),
            schema_id: SCHEMA_ID.to_string(),
        })
        .collect();
    let standardizer = fit_standardizer(&vectors)?;
    let norm = NormStats::fit(raw.iter().map(|(_, l, _)| l));
    let items = raw
        .into_iter()
        .zip(&vectors)
        .map(|((id, lms, _), v)| {
            let z = standardize(v, &standardizer)?;
            Ok(TrainItem {
                id,
                lms,
                sup: z.values.iter().map(|&x| x as f32).collect(),
            })
        })
        .collect::<Result<_, FeatureError>>()?;
    Ok(PreparedCorpus {
        items,
        norm,
        standardizer,
    })
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = i.rem_euclid(period);
    (if r < n as isize { r } else { period - r }) as usize
}

/// `frames` consecutive frames starting at `start`, reflecting past the end.
pub fn crop_frames(x: &LogMelSpectrogram, start: usize, frames: usize) -> LogMelSpectrogram {
    let m = x.mel_bins;
    let mut v = Vec::with_capacity(frames * m);
    for t in 0..frames {
        let src = reflect((start + t) as isize, x.frames);
        v.extend_from_slice(&x.values[src * m..(src + 1) * m]);
    }
    x.with_values(v, frames)
}

/// Random fixed-length crop; shorter inputs are reflect-padded.
pub fn random_crop<R: rand::Rng + ?Sized>(x: &LogMelSpectrogram, frames: usize, rng: &mut R) -> LogMelSpectrogram {
    let start = if x.frames > frames {
        rng.random_range(0..=x.frames - frames)
    } else {
        0
    };
    crop_frames(x, start, frames)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub l_ss: f64,
    pub l_sup: f64,
    pub l_hybrid: f64,
    pub tau: f64,
}

/// Per-step loss record, persisted as CSV `step,l_ss,l_sup,l_hybrid,tau`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,l_ss,l_sup,l_hybrid,tau\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.step, r.l_ss, r.l_sup, r.l_hybrid, r.tau));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, TrainError> {
        let mut rows = Vec::new();
        let mut lines = text.lines();
        if lines.next() != Some("step,l_ss,l_sup,l_hybrid,tau") {
            return Err(TrainError::Config("train log: unexpected header".into()));
        }
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64, TrainError> {
                f.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| TrainError::Config(format!("train log: bad row '{line}'")))
            };
            rows.push(LogRow {
                step: num(0)? as u64,
                l_ss: num(1)?,
                l_sup: num(2)?,
                l_hybrid: num(3)?,
                tau: num(4)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn l_hybrid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.l_hybrid).collect()
    }
}

/// Everything needed to continue training or to embed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub step: u64,
    pub norm: NormStats,
    pub model: ModelConfig,
    pub frontend: FrontendConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub standardizer: FeatureStandardizer,
}

const META_FORMAT: &str = "stressrep-pretrain-v1";

/// Online/target networks with optimiser and augmentation state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub state: ModelState<f32>,
    pub adam: Adam<f32>,
    pub memory: MixupMemory,
    pub step: u64,
    pub norm: NormStats,
    pub standardizer: FeatureStandardizer,
    pub model: ModelConfig,
    pub frontend: FrontendConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
}

impl Trainer {
    /// Fresh model from `cfg.train.seed`.
    pub fn new(cfg: &RunConfig, norm: NormStats, standardizer: FeatureStandardizer) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::Config)?;
        if standardizer.mean.len() != cfg.model.d_sup {
            return Err(TrainError::Config(format!(
                "supervision dimension {} differs from model.d_sup {}",
                standardizer.mean.len(),
                cfg.model.d_sup
            )));
        }
        let state = ModelState::init(cfg.model.clone(), &mut rng::stream(cfg.train.seed, &[tag::INIT]))?;
        let adam = Adam::new(cfg.train.adam(), &state.online);
        Ok(Self {
            state,
            adam,
            memory: MixupMemory::new(cfg.augment.memory_capacity),
            step: 0,
            norm,
            standardizer,
            model: cfg.model.clone(),
            frontend: cfg.frontend.clone(),
            augment: cfg.augment.clone(),
            train: cfg.train.clone(),
        })
    }

    pub fn crop_len(&self) -> usize {
        self.frontend.frames_for(self.train.crop_secs).max(self.model.min_frames())
    }

    /// Indices of the items drawn at `step` (per-epoch seeded permutation).
    pub fn batch_indices(&self, step: u64, n_items: usize) -> Vec<usize> {
        let b = self.train.batch_size as u64;
        let n = n_items as u64;
        let mut cached: Option<(u64, Vec<usize>)> = None;
        (0..b)
            .map(|i| {
                let k = step * b + i;
                let epoch = k / n;
                if cached.as_ref().map(|c| c.0) != Some(epoch) {
                    let mut perm: Vec<usize> = (0..n_items).collect();
                    perm.shuffle(&mut rng::stream(self.train.seed, &[tag::SHUFFLE, epoch]));
                    cached = Some((epoch, perm));
                }
                cached.as_ref().unwrap().1[(k % n) as usize]
            })
            .collect()
    }

    /// One optimisation step on explicit `(crop, target)` pairs. Views are
    /// drawn from the augmentation stream of the current step.
    pub fn train_step(&mut self, batch: &[(LogMelSpectrogram, &[f32])], ids: &[String]) -> Result<LossParts, TrainError> {
        if batch.is_empty() {
            return Err(TrainError::Config("empty batch".into()));
        }
        let views: Vec<_> = batch
            .iter()
            .enumerate()
            .map(|(i, (x, _))| {
                let mut r = rng::stream(self.train.seed, &[tag::AUGMENT, self.step, i as u64]);
                make_views(x, &self.norm, &mut self.memory, &self.augment, &mut r)
            })
            .collect();
        let weights = self.train.loss();
        let scale = 1.0 / batch.len() as f32;
        let state = &self.state;
        let per_sample: Vec<Result<(f64, f64, ParamSet<f32>), NnError>> = views
            .par_iter()
            .zip(batch.par_iter())
            .map(|(v, (_, sup))| {
                let mut g = state.online.zeros_like();
                let l = state.sample_loss_grad(
                    &v.view_a.values,
                    &v.view_b.values,
                    v.view_a.frames,
                    sup,
                    &weights,
                    scale,
                    &mut g,
                )?;
                Ok((l.l_ss as f64, l.l_sup as f64, g))
            })
            .collect();
        let mut grads = self.state.online.zeros_like();
        let (mut l_ss, mut l_sup) = (0.0, 0.0);
        let mut bad = Vec::new();
        for (i, r) in per_sample.into_iter().enumerate() {
            let (a, b, g) = r?;
            if !(a.is_finite() && b.is_finite()) {
                bad.push(ids.get(i).cloned().unwrap_or_else(|| format!("#{i}")));
            }
            l_ss += a;
            l_sup += b;
            grads.add_scaled(&g, 1.0);
        }
        if !bad.is_empty() {
            return Err(TrainError::NonFinite { step: self.step, ids: bad });
        }
        let n = batch.len() as f64;
        let parts = hybrid_loss(l_ss / n, l_sup / n, &weights);
        self.adam.step(&mut self.state.online, &grads)?;
        ema_update(&mut self.state.target, &self.state.online, self.train.tau);
        self.step += 1;
        Ok(parts)
    }

    /// Draw the next batch from `items` and train on it.
    pub fn next_step(&mut self, items: &[TrainItem]) -> Result<LogRow, TrainError> {
        let step = self.step;
        let idx = self.batch_indices(step, items.len());
        let frames = self.crop_len();
        let batch: Vec<(LogMelSpectrogram, &[f32])> = idx
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let mut r = rng::stream(self.train.seed, &[tag::CROP, step, i as u64]);
                (random_crop(&items[k].lms, frames, &mut r), items[k].sup.as_slice())
            })
            .collect();
        let ids: Vec<String> = idx.iter().map(|&k| items[k].id.clone()).collect();
        let p = self.train_step(&batch, &ids)?;
        Ok(LogRow {
            step,
            l_ss: p.l_ss,
            l_sup: p.l_sup,
            l_hybrid: p.l_hybrid,
            tau: self.train.tau,
        })
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            format: META_FORMAT.into(),
            step: self.step,
            norm: self.norm,
            model: self.model.clone(),
            frontend: self.frontend.clone(),
            augment: self.augment.clone(),
            train: self.train.clone(),
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut records = Vec::new();
        let sets = [
            ("online.", &self.state.online),
            ("target.", &self.state.target),
            ("adam.m.", &self.adam.m),
            ("adam.v.", &self.adam.v),
        ];
        for (prefix, set) in sets {
            for (n, t) in set.names.iter().zip(&set.tensors) {
                records.push((format!("{prefix}{n}"), t.clone()));
            }
        }
        for (i, e) in self.memory.entries().enumerate() {
            records.push((
                format!("mixup.{i:05}"),
                Tensor {
                    shape: vec![e.frames, e.mel_bins],
                    data: e.values.clone(),
                },
            ));
        }
        Checkpoint {
            meta: toml::to_string(&self.meta()).expect("meta serialises"),
            records,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TrainError> {
        let meta = parse_meta(ck)?;
        let state = model_from_checkpoint(ck, &meta)?;
        let set = |prefix: &str| -> Result<ParamSet<f32>, TrainError> {
            let mut p = state.online.zeros_like();
            for (name, t) in ck.with_prefix(prefix) {
                let k = p
                    .names
                    .iter()
                    .position(|n| *n == name)
                    .ok_or_else(|| TrainError::Checkpoint(format!("unexpected record {prefix}{name}")))?;
                if p.tensors[k].shape != t.shape {
                    return Err(TrainError::Checkpoint(format!("shape mismatch for {prefix}{name}")));
                }
                p.tensors[k] = t;
            }
            Ok(p)
        };
        let mut adam = Adam::new(meta.train.adam(), &state.online);
        adam.m = set("adam.m.")?;
        adam.v = set("adam.v.")?;
        adam.t = meta.step;
        let mut memory = MixupMemory::new(meta.augment.memory_capacity);
        for (_, t) in ck.with_prefix("mixup.") {
            if t.shape.len() != 2 {
                return Err(TrainError::Checkpoint("malformed mixup record".into()));
            }
            memory.push(LogMelSpectrogram::from_matrix(t.data, t.shape[0], t.shape[1]));
        }
        Ok(Self {
            state,
            adam,
            memory,
            step: meta.step,
            norm: meta.norm,
            standardizer: meta.standardizer,
            model: meta.model,
            frontend: meta.frontend,
            augment: meta.augment,
            train: meta.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut bytes = Vec::new();
        write_checkpoint(&self.to_checkpoint(), &mut bytes)?;
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_checkpoint(&load_checkpoint(path)?)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let f = std::fs::File::open(path)
        .map_err(|e| TrainError::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_checkpoint(std::io::BufReader::new(f))?)
}

pub fn parse_meta(ck: &Checkpoint) -> Result<CheckpointMeta, TrainError> {
    let meta: CheckpointMeta =
        toml::from_str(&ck.meta).map_err(|e| TrainError::Checkpoint(format!("bad metadata: {e}")))?;
    if meta.format != META_FORMAT {
        return Err(TrainError::Checkpoint(format!("unsupported format '{}'", meta.format)));
    }
    Ok(meta)
}

/// Online and target networks from a checkpoint.
pub fn model_from_checkpoint(ck: &Checkpoint, meta: &CheckpointMeta) -> Result<ModelState<f32>, TrainError> {
    let mut online = ParamSet::new();
    for (n, t) in ck.with_prefix("online.") {
        online.push(n, t);
    }
    let mut target = ParamSet::new();
    for (n, t) in ck.with_prefix("target.") {
        target.push(n, t);
    }
    Ok(ModelState::from_params(meta.model.clone(), online, target)?)
}

/// Short content hash identifying a checkpoint file.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Artifacts of a pretraining run.
#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub log: TrainLog,
    pub trainer: Trainer,
}

/// Train for `cfg.train.steps` steps (continuing from `resume` if given),
/// writing `checkpoint.bin` and `train_log.csv` under `out_dir`.
pub fn pretrain(
    corpus: &PreparedCorpus,
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<PretrainOutput, TrainError> {
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("train_log.csv");
    let (mut trainer, mut log) = match resume {
        Some(p) => {
            let t = Trainer::load(p)?;
            if t.model != cfg.model || t.frontend != cfg.frontend {
                return Err(TrainError::Config("resume checkpoint disagrees with model/frontend config".into()));
            }
            let mut log = match std::fs::read_to_string(&log_path) {
                Ok(text) => TrainLog::from_csv(&text)?,
                Err(_) => TrainLog::default(),
            };
            log.rows.retain(|r| r.step < t.step);
            (t, log)
        }
        None => (
            Trainer::new(cfg, corpus.norm, corpus.standardizer.clone())?,
            TrainLog::default(),
        ),
    };
    trainer.train = cfg.train.clone();
    let checkpoint = out_dir.join("checkpoint.bin");
    while trainer.step < cfg.train.steps {
        let row = trainer.next_step(&corpus.items)?;
        log::debug!(
            "step {} l_ss {:.4} l_sup {:.4} l_hybrid {:.4}",
            row.step,
            row.l_ss,
            row.l_sup,
            row.l_hybrid
        );
        log.rows.push(row);
        let interval = cfg.train.checkpoint_interval;
        if interval > 0 && trainer.step % interval == 0 && trainer.step < cfg.train.steps {
            trainer.save(&out_dir.join(format!("checkpoint_step{:06}.bin", trainer.step)))?;
            write_atomic(&log_path, log.to_csv().as_bytes())?;
        }
    }
    trainer.save(&checkpoint)?;
    write_atomic(&log_path, log.to_csv().as_bytes())?;
    Ok(PretrainOutput {
        checkpoint,
        log_path,
        log,
        trainer,
    })
}

/// Utterance embeddings keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub checkpoint_id: String,
    pub ids: Vec<String>,
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
}

const EMB_MAGIC: &[u8; 16] = b"STRESSREP-EMB\0\0\0";
const EMB_VERSION: u32 = 1;

impl EmbeddingMatrix {
    /// Layout: magic, u32 version, u64 rows, u64 cols, u32-prefixed
    /// checkpoint id, then per row a u32-prefixed id and `cols` f32 values.
    pub fn write<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(EMB_MAGIC)?;
        out.write_all(&EMB_VERSION.to_le_bytes())?;
        out.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        let put_str = |out: &mut W, s: &str| -> std::io::Result<()> {
            out.write_all(&(s.len() as u32).to_le_bytes())?;
            out.write_all(s.as_bytes())
        };
        put_str(&mut out, &self.checkpoint_id)?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            put_str(&mut out, id)?;
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(16)? != EMB_MAGIC {
            return Err(emb_err("bad magic"));
        }
        let version = c.u32()?;
        if version != EMB_VERSION {
            return Err(emb_err(&format!("unsupported version {version}")));
        }
        let n = c.u64()? as usize;
        let dim = c.u64()? as usize;
        let checkpoint_id = c.string()?;
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut rows = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            ids.push(c.string()?);
            let raw = c.take(4 * dim)?;
            rows.push(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect());
        }
        if c.pos != bytes.len() {
            return Err(emb_err("trailing bytes"));
        }
        Ok(Self {
            checkpoint_id,
            ids,
            dim,
            rows,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut bytes = Vec::new();
        self.write(&mut bytes)?;
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::read(&std::fs::read(path)?)
    }

    /// View as a feature table for the evaluation harness.
    pub fn to_feature_table(&self) -> crate::features::FeatureTable {
        crate::features::FeatureTable {
            schema_id: format!("embedding:{}", self.checkpoint_id),
            columns: (0..self.dim).map(|i| format!("e{i}")).collect(),
            ids: self.ids.clone(),
            rows: self.rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
        }
    }
}

fn emb_err(m: &str) -> TrainError {
    TrainError::Checkpoint(format!("embedding file: {m}"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).ok_or_else(|| emb_err("truncated"))?;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| emb_err("truncated"))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, TrainError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| emb_err("invalid utf-8"))
    }
}

/// Frozen-encoder embedding of whole utterances: pre-normalise, pad to the
/// encoder's minimum length if needed, encode.
pub fn embed_lms(
    state: &ModelState<f32>,
    norm: &NormStats,
    lms: &LogMelSpectrogram,
) -> Result<Vec<f32>, TrainError> {
    if lms.mel_bins != state.config.mel_bins {
        return Err(TrainError::Config(format!(
            "input has {} mel bins, checkpoint expects {}",
            lms.mel_bins, state.config.mel_bins
        )));
    }
    let min = state.config.min_frames();
    let x = if lms.frames < min {
        crop_frames(lms, 0, min)
    } else {
        lms.clone()
    };
    let x = pre_normalize(&x, norm);
    Ok(state.embed(&x.values, x.frames)?)
}

/// Embed every manifest utterance with the checkpoint's online encoder.
pub fn embed_manifest(ck_path: &Path, m: &Manifest, frontend: &FrontendConfig) -> Result<EmbeddingMatrix, TrainError> {
    let bytes = std::fs::read(ck_path)
        .map_err(|e| TrainError::Checkpoint(format!("cannot open {}: {e}", ck_path.display())))?;
    let ck = read_checkpoint(bytes.as_slice())?;
    let meta = parse_meta(&ck)?;
    if meta.frontend != *frontend {
        return Err(TrainError::Config(
            "frontend settings differ from those the checkpoint was trained with".into(),
        ));
    }
    let state = model_from_checkpoint(&ck, &meta)?;
    let rows = data::map_manifest(m, |r| {
        let w = data::load_utterance(r)?;
        data::logmel_of(&r.utterance_id, &w, frontend)
    })?
    .par_iter()
    .map(|lms| embed_lms(&state, &meta.norm, lms))
    .collect::<Result<Vec<_>, _>>()?;
    Ok(EmbeddingMatrix {
        checkpoint_id: checkpoint_id(&bytes),
        ids: m.records.iter().map(|r| r.utterance_id.clone()).collect(),
        dim: meta.model.embed_dim,
        rows,
    })
}

/// Mean of the first and last `window` entries.
pub fn leading_trailing_means(values: &[f64], window: usize) -> (f64, f64) {
    let w = window.min(values.len()).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&values[..w]), mean(&values[values.len() - w..]))
}

/// Write the resolved configuration next to run outputs.
pub fn write_resolved_config(dir: &Path, cfg: &RunConfig) -> std::io::Result<()> {
    write_atomic(&dir.join("resolved_config.toml"), cfg.to_toml().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.frontend.mel_bins = 16;
        cfg.model = ModelConfig {
            mel_bins: 16,
            channels: vec![4, 8],
            embed_dim: 8,
            proj_hidden: 16,
            pred_hidden: 16,
            d_sup: 6,
            norm_eps: 1e-5,
        };
        cfg.train.batch_size = 3;
        cfg.train.steps = 4;
        cfg
    }

    fn toy_items(n: usize, seed: u64) -> Vec<TrainItem> {
        let mut r = rng::stream(seed, &[77]);
        (0..n)
            .map(|i| TrainItem {
                id: format!("u{i}"),
                lms: LogMelSpectrogram::from_matrix(
                    (0..(60 + 20 * i) * 16).map(|_| r.random_range(-4.0f32..2.0)).collect(),
                    60 + 20 * i,
                    16,
                ),
                sup: (0..6).map(|_| r.random_range(-1.0f32..1.0)).collect(),
            })
            .collect()
    }

    fn std6() -> FeatureStandardizer {
        FeatureStandardizer {
            mean: vec![0.0; 6],
            std: vec![1.0; 6],
            schema_id: SCHEMA_ID.into(),
        }
    }

    fn trainer(cfg: &RunConfig) -> Trainer {
        Trainer::new(cfg, NormStats { mean: -1.0, std: 1.7 }, std6()).unwrap()
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (0..9).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn identical_views_fresh_target_give_zero_ss() {
        let mut cfg = tiny_cfg();
        cfg.augment = AugmentConfig::disabled();
        cfg.train.alpha_sup = 0.0;
        let mut t = trainer(&cfg);
        let items = toy_items(5, 1);
        let row = t.next_step(&items).unwrap();
        assert!(row.l_ss.abs() < 1e-9, "l_ss {}", row.l_ss);
    }

    #[test]
    fn logged_hybrid_matches_weighted_sum_and_is_deterministic() {
        let mut cfg = tiny_cfg();
        cfg.train.alpha_ss = 0.7;
        cfg.train.alpha_sup = 1.3;
        let items = toy_items(5, 2);
        let run = || {
            let mut t = trainer(&cfg);
            (0..4).map(|_| t.next_step(&items).unwrap()).collect::<Vec<_>>()
        };
        let a = run();
        for r in &a {
            assert!((r.l_hybrid - (0.7 * r.l_ss + 1.3 * r.l_sup)).abs() <= 1e-9);
        }
        assert_eq!(a, run());
    }

    #[test]
    fn target_only_moves_by_ema() {
        let cfg = tiny_cfg();
        let items = toy_items(4, 3);
        let mut t = trainer(&cfg);
        let before_target = t.state.target.clone();
        let before_online = t.state.online.clone();
        t.next_step(&items).unwrap();
        // reconstruct the expected target from the pre-step target and the new online
        let mut expect = before_target.clone();
        ema_update(&mut expect, &t.state.online, cfg.train.tau);
        assert_eq!(expect, t.state.target);
        assert_ne!(before_online, t.state.online);
    }

    #[test]
    fn batches_cover_each_epoch() {
        let cfg = tiny_cfg();
        let t = trainer(&cfg);
        let mut seen: Vec<usize> = (0..3).flat_map(|s| t.batch_indices(s, 9)).collect();
        seen.sort();
        assert_eq!(seen, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted() {
        let cfg = tiny_cfg();
        let items = toy_items(5, 4);
        let mut full = trainer(&cfg);
        let mut rows = Vec::new();
        for _ in 0..3 {
            rows.push(full.next_step(&items).unwrap());
        }
        let mut part = trainer(&cfg);
        part.next_step(&items).unwrap();
        part.next_step(&items).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&part.to_checkpoint(), &mut bytes).unwrap();
        let ck = read_checkpoint(bytes.as_slice()).unwrap();
        let mut resumed = Trainer::from_checkpoint(&ck).unwrap();
        assert_eq!(resumed.state, part.state);
        assert_eq!(resumed.adam, part.adam);
        let next = resumed.next_step(&items).unwrap();
        assert_eq!(next, rows[2]);
        assert_eq!(resumed.state, full.state);
    }

    #[test]
    fn embedding_file_round_trip() {
        let e = EmbeddingMatrix {
            checkpoint_id: "abc".into(),
            ids: vec!["x".into(), "y".into()],
            dim: 3,
            rows: vec![vec![1.0, -2.5, f32::MIN_POSITIVE], vec![0.0, 3.0, 1e30]],
        };
        let mut b = Vec::new();
        e.write(&mut b).unwrap();
        assert_eq!(EmbeddingMatrix::read(&b).unwrap(), e);
        assert!(EmbeddingMatrix::read(&b[..b.len() - 1]).is_err());
        b.push(0);
        assert!(EmbeddingMatrix::read(&b).is_err());
    }

    #[test]
    fn embeddings_are_deterministic_and_short_inputs_pad() {
        let cfg = tiny_cfg();
        let t = trainer(&cfg);
        let items = toy_items(2, 5);
        let a = embed_lms(&t.state, &t.norm, &items[0].lms).unwrap();
        assert_eq!(a, embed_lms(&t.state, &t.norm, &items[0].lms).unwrap());
        assert_eq!(a.len(), cfg.model.embed_dim);
        let short = crop_frames(&items[1].lms, 0, 2);
        assert_eq!(embed_lms(&t.state, &t.norm, &short).unwrap().len(), 8);
    }

    #[test]
    fn log_csv_round_trip() {
        let log = TrainLog {
            rows: vec![LogRow {
                step: 0,
                l_ss: 0.1 + 0.2,
                l_sup: 1.0 / 3.0,
                l_hybrid: 0.1 + 0.2 + 1.0 / 3.0,
                tau: 0.99,
            }],
        };
        assert_eq!(TrainLog::from_csv(&log.to_csv()).unwrap(), log);
    }
}
