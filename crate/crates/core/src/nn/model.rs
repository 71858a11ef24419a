//! Encoder, projector and predictor with explicit forward caches and
//! backward passes.
//!
//! Encoder: `len(channels)` blocks of 3x3 convolution (no bias), per-channel
//! instance normalisation with learned scale/shift, ReLU and 2x2 max-pool;
//! then a mean over time, flatten over (channel, frequency) and a linear
//! layer to `embed_dim`. Projector: `embed_dim -> proj_hidden -> d_sup` MLP.
//! Predictor: residual MLP `p + mlp(p)` on `d_sup`, whose last layer starts at
//! zero so the predictor is the identity at initialisation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{byol_loss, byol_loss_grad, sup_loss, sup_loss_grad, HybridLossConfig};
use super::ops::{col2im, gemm, im2col, Real};
use super::{NnError, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mel_bins: usize,
    pub channels: Vec<usize>,
    pub embed_dim: usize,
    pub proj_hidden: usize,
    pub pred_hidden: usize,
    pub d_sup: usize,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mel_bins: 64,
            channels: vec![32, 64, 128],
            embed_dim: 128,
            proj_hidden: 256,
            pred_hidden: 256,
            d_sup: crate::features::D_SUP,
            norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Smallest number of frames the encoder accepts.
    pub fn min_frames(&self) -> usize {
        1 << self.channels.len()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(NnError::Config("channels must be a non-empty list of positive sizes".into()));
        }
        if self.mel_bins >> self.channels.len() == 0 {
            return Err(NnError::Config(format!(
                "{} mel bins cannot be pooled {} times",
                self.mel_bins,
                self.channels.len()
            )));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("proj_hidden", self.proj_hidden),
            ("pred_hidden", self.pred_hidden),
            ("d_sup", self.d_sup),
        ] {
            if v == 0 {
                return Err(NnError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.norm_eps > 0.0) {
            return Err(NnError::Config("norm_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockIdx {
    pub weight: usize,
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Parameter indices. Target networks hold the first `n_target` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub blocks: Vec<BlockIdx>,
    pub fc_w: usize,
    pub fc_b: usize,
    pub proj: MlpIdx,
    pub pred: MlpIdx,
    pub n_target: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let nb = cfg.channels.len();
        let blocks = (0..nb)
            .map(|k| BlockIdx {
                weight: 3 * k,
                gamma: 3 * k + 1,
                beta: 3 * k + 2,
            })
            .collect();
        let base = 3 * nb;
        let mlp = |s| MlpIdx {
            w1: s,
            b1: s + 1,
            w2: s + 2,
            b2: s + 3,
        };
        Self {
            blocks,
            fc_w: base,
            fc_b: base + 1,
            proj: mlp(base + 2),
            pred: mlp(base + 6),
            n_target: base + 6,
        }
    }

    pub fn projector_indices(&self) -> [usize; 4] {
        [self.proj.w1, self.proj.b1, self.proj.w2, self.proj.b2]
    }

    pub fn predictor_indices(&self) -> [usize; 4] {
        [self.pred.w1, self.pred.b1, self.pred.w2, self.pred.b2]
    }
}

/// Online and target parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub online: ParamSet<T>,
    pub target: ParamSet<T>,
}

pub struct BlockCache<T> {
    h: usize,
    w: usize,
    cols: Vec<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    pre_relu: Vec<T>,
    argmax: Vec<u32>,
}

pub struct EncoderCache<T> {
    blocks: Vec<BlockCache<T>>,
    pooled: (usize, usize),
    feat: Vec<T>,
}

pub struct HeadCache<T> {
    input: Vec<T>,
    hidden_pre: Vec<T>,
}

pub struct ForwardOnline<T> {
    pub embedding: Vec<T>,
    pub projection: Vec<T>,
    pub prediction: Vec<T>,
    pub encoder: EncoderCache<T>,
    pub projector: HeadCache<T>,
    pub predictor: HeadCache<T>,
}

/// Per-sample loss terms (before weighting).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss<T> {
    pub l_ss: T,
    pub l_sup: T,
}

fn kaiming<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor {
        shape: shape.to_vec(),
        data: (0..shape.iter().product::<usize>())
            .map(|_| T::from_f64(rng.random_range(-bound..bound)).unwrap())
            .collect(),
    }
}

fn filled<T: Real>(shape: &[usize], v: f64) -> Tensor<T> {
    Tensor {
        shape: shape.to_vec(),
        data: vec![T::from_f64(v).unwrap(); shape.iter().product()],
    }
}

fn mlp_forward<T: Real>(p: &ParamSet<T>, idx: MlpIdx, x: &[T]) -> (Vec<T>, HeadCache<T>) {
    let w1 = &p.tensors[idx.w1];
    let (hidden, input) = (w1.shape[0], w1.shape[1]);
    let w2 = &p.tensors[idx.w2];
    let out = w2.shape[0];
    let mut h = p.tensors[idx.b1].data.clone();
    gemm(hidden, input, 1, &w1.data, false, x, false, T::one(), &mut h);
    let r: Vec<T> = h.iter().map(|&v| v.max(T::zero())).collect();
    let mut o = p.tensors[idx.b2].data.clone();
    gemm(out, hidden, 1, &w2.data, false, &r, false, T::one(), &mut o);
    (
        o,
        HeadCache {
            input: x.to_vec(),
            hidden_pre: h,
        },
    )
}

/// Accumulates parameter gradients and returns the input gradient.
fn mlp_backward<T: Real>(
    p: &ParamSet<T>,
    idx: MlpIdx,
    cache: &HeadCache<T>,
    d_out: &[T],
    grads: &mut ParamSet<T>,
) -> Vec<T> {
    let w1 = &p.tensors[idx.w1];
    let (hidden, input) = (w1.shape[0], w1.shape[1]);
    let out = p.tensors[idx.w2].shape[0];
    let r: Vec<T> = cache.hidden_pre.iter().map(|&v| v.max(T::zero())).collect();
    gemm(out, 1, hidden, d_out, false, &r, false, T::one(), &mut grads.tensors[idx.w2].data);
    grads.tensors[idx.b2]
        .data
        .iter_mut()
        .zip(d_out)
        .for_each(|(g, &d)| *g += d);
    let mut dr = vec![T::zero(); hidden];
    gemm(hidden, out, 1, &p.tensors[idx.w2].data, true, d_out, false, T::zero(), &mut dr);
    for (d, &h) in dr.iter_mut().zip(&cache.hidden_pre) {
        if h <= T::zero() {
            *d = T::zero();
        }
    }
    gemm(hidden, 1, input, &dr, false, &cache.input, false, T::one(), &mut grads.tensors[idx.w1].data);
    grads.tensors[idx.b1]
        .data
        .iter_mut()
        .zip(&dr)
        .for_each(|(g, &d)| *g += d);
    let mut dx = vec![T::zero(); input];
    gemm(input, hidden, 1, &w1.data, true, &dr, false, T::zero(), &mut dx);
    dx
}

impl<T: Real> ModelState<T> {
    /// Kaiming-uniform weights, zero biases, unit norm scales, zero last
    /// predictor layer; target starts as an exact copy of the online
    /// encoder and projector.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, NnError> {
        config.validate()?;
        let mut p = ParamSet::new();
        let mut c_in = 1;
        for (k, &c) in config.channels.iter().enumerate() {
            p.push(format!("encoder.conv{k}.weight"), kaiming(&[c, c_in * 9], c_in * 9, rng));
            p.push(format!("encoder.norm{k}.gamma"), filled(&[c], 1.0));
            p.push(format!("encoder.norm{k}.beta"), filled(&[c], 0.0));
            c_in = c;
        }
        let flat = c_in * (config.mel_bins >> config.channels.len());
        p.push("encoder.fc.weight", kaiming(&[config.embed_dim, flat], flat, rng));
        p.push("encoder.fc.bias", filled(&[config.embed_dim], 0.0));
        let (e, h, d) = (config.embed_dim, config.proj_hidden, config.d_sup);
        p.push("projector.fc1.weight", kaiming(&[h, e], e, rng));
        p.push("projector.fc1.bias", filled(&[h], 0.0));
        p.push("projector.fc2.weight", kaiming(&[d, h], h, rng));
        p.push("projector.fc2.bias", filled(&[d], 0.0));
        let hp = config.pred_hidden;
        p.push("predictor.fc1.weight", kaiming(&[hp, d], d, rng));
        p.push("predictor.fc1.bias", filled(&[hp], 0.0));
        p.push("predictor.fc2.weight", filled(&[d, hp], 0.0));
        p.push("predictor.fc2.bias", filled(&[d], 0.0));
        let layout = Layout::new(&config);
        let target = p.prefix(layout.n_target);
        Ok(Self {
            config,
            layout,
            online: p,
            target,
        })
    }

    /// Rebuild from parameter sets (e.g. a checkpoint), checking shapes.
    pub fn from_params(config: ModelConfig, online: ParamSet<T>, target: ParamSet<T>) -> Result<Self, NnError> {
        let reference = Self::init(config.clone(), &mut crate::rng::stream(0, &[]))?;
        for (name, set, want) in [("online", &online, &reference.online), ("target", &target, &reference.target)] {
            if set.names != want.names {
                return Err(NnError::Checkpoint(format!("{name} parameter names do not match the model config")));
            }
            for ((n, a), b) in set.names.iter().zip(&set.tensors).zip(&want.tensors) {
                if a.shape != b.shape {
                    return Err(NnError::Checkpoint(format!(
                        "{name}.{n} has shape {:?}, config implies {:?}",
                        a.shape, b.shape
                    )));
                }
            }
        }
        Ok(Self {
            layout: reference.layout,
            config,
            online,
            target,
        })
    }

    pub fn cast<U: Real>(&self) -> ModelState<U> {
        ModelState {
            config: self.config.clone(),
            layout: self.layout.clone(),
            online: self.online.cast(),
            target: self.target.cast(),
        }
    }

    fn check_input(&self, x: &[T], frames: usize) -> Result<(), NnError> {
        let m = self.config.mel_bins;
        if frames < self.config.min_frames() || x.len() != frames * m {
            return Err(NnError::Shape {
                expected: m,
                min_frames: self.config.min_frames(),
                got: (frames, if frames == 0 { 0 } else { x.len() / frames }),
            });
        }
        Ok(())
    }

    fn encode(&self, p: &ParamSet<T>, x: &[T], frames: usize) -> (Vec<T>, EncoderCache<T>) {
        let eps = T::from_f64(self.config.norm_eps).unwrap();
        let (mut h, mut w) = (frames, self.config.mel_bins);
        let mut c_in = 1;
        let mut act = x.to_vec();
        let mut blocks = Vec::with_capacity(self.config.channels.len());
        for (k, &c) in self.config.channels.iter().enumerate() {
            let idx = self.layout.blocks[k];
            let hw = h * w;
            let cols = im2col(&act, c_in, h, w);
            let mut z = vec![T::zero(); c * hw];
            gemm(c, c_in * 9, hw, &p.tensors[idx.weight].data, false, &cols, false, T::zero(), &mut z);
            let n = T::from_usize(hw).unwrap();
            let mut inv_std = Vec::with_capacity(c);
            let gamma = &p.tensors[idx.gamma].data;
            let beta = &p.tensors[idx.beta].data;
            let mut pre_relu = vec![T::zero(); c * hw];
            for ch in 0..c {
                let plane = &mut z[ch * hw..(ch + 1) * hw];
                let mean = plane.iter().copied().sum::<T>() / n;
                let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                let is = T::one() / (var + eps).sqrt();
                inv_std.push(is);
                let out = &mut pre_relu[ch * hw..(ch + 1) * hw];
                for (xh, y) in plane.iter_mut().zip(out.iter_mut()) {
                    *xh = (*xh - mean) * is;
                    *y = gamma[ch] * *xh + beta[ch];
                }
            }
            let (ph, pw) = (h / 2, w / 2);
            let mut pooled = vec![T::zero(); c * ph * pw];
            let mut argmax = vec![0u32; c * ph * pw];
            for ch in 0..c {
                let plane = &pre_relu[ch * hw..(ch + 1) * hw];
                for i in 0..ph {
                    for j in 0..pw {
                        let mut best = 2 * i * w + 2 * j;
                        for cand in [2 * i * w + 2 * j + 1, (2 * i + 1) * w + 2 * j, (2 * i + 1) * w + 2 * j + 1] {
                            if plane[cand] > plane[best] {
                                best = cand;
                            }
                        }
                        let o = ch * ph * pw + i * pw + j;
                        // relu commutes with max
                        pooled[o] = plane[best].max(T::zero());
                        argmax[o] = best as u32;
                    }
                }
            }
            blocks.push(BlockCache {
                h,
                w,
                cols,
                xhat: z,
                inv_std,
                pre_relu,
                argmax,
            });
            act = pooled;
            h = ph;
            w = pw;
            c_in = c;
        }
        // mean over time -> [C, W]
        let mut feat = vec![T::zero(); c_in * w];
        let inv_h = T::one() / T::from_usize(h).unwrap();
        for ch in 0..c_in {
            for t in 0..h {
                for f in 0..w {
                    feat[ch * w + f] += act[ch * h * w + t * w + f];
                }
            }
        }
        feat.iter_mut().for_each(|v| *v *= inv_h);
        let fc = &p.tensors[self.layout.fc_w];
        let mut emb = p.tensors[self.layout.fc_b].data.clone();
        gemm(fc.shape[0], fc.shape[1], 1, &fc.data, false, &feat, false, T::one(), &mut emb);
        (
            emb,
            EncoderCache {
                blocks,
                pooled: (h, w),
                feat,
            },
        )
    }

    fn encode_backward(&self, cache: &EncoderCache<T>, d_emb: &[T], grads: &mut ParamSet<T>) {
        let p = &self.online;
        let fc = &p.tensors[self.layout.fc_w];
        let (e, flat) = (fc.shape[0], fc.shape[1]);
        gemm(e, 1, flat, d_emb, false, &cache.feat, false, T::one(), &mut grads.tensors[self.layout.fc_w].data);
        grads.tensors[self.layout.fc_b]
            .data
            .iter_mut()
            .zip(d_emb)
            .for_each(|(g, &d)| *g += d);
        let mut d_feat = vec![T::zero(); flat];
        gemm(flat, e, 1, &fc.data, true, d_emb, false, T::zero(), &mut d_feat);

        let (h, w) = cache.pooled;
        let c_last = *self.config.channels.last().unwrap();
        let inv_h = T::one() / T::from_usize(h).unwrap();
        let mut d_act = vec![T::zero(); c_last * h * w];
        for ch in 0..c_last {
            for t in 0..h {
                for f in 0..w {
                    d_act[ch * h * w + t * w + f] = d_feat[ch * w + f] * inv_h;
                }
            }
        }

        for k in (0..self.config.channels.len()).rev() {
            let idx = self.layout.blocks[k];
            let bc = &cache.blocks[k];
            let c = self.config.channels[k];
            let c_in = if k == 0 { 1 } else { self.config.channels[k - 1] };
            let hw = bc.h * bc.w;
            let (ph, pw) = (bc.h / 2, bc.w / 2);
            let n = T::from_usize(hw).unwrap();
            let gamma = &p.tensors[idx.gamma].data;
            let mut dz = vec![T::zero(); c * hw];
            for ch in 0..c {
                let dy = &mut dz[ch * hw..(ch + 1) * hw];
                for o in 0..ph * pw {
                    let pos = bc.argmax[ch * ph * pw + o] as usize;
                    if bc.pre_relu[ch * hw + pos] > T::zero() {
                        dy[pos] += d_act[ch * ph * pw + o];
                    }
                }
                let xhat = &bc.xhat[ch * hw..(ch + 1) * hw];
                let (mut dg, mut db) = (T::zero(), T::zero());
                for (&d, &x) in dy.iter().zip(xhat) {
                    dg += d * x;
                    db += d;
                }
                grads.tensors[idx.gamma].data[ch] += dg;
                grads.tensors[idx.beta].data[ch] += db;
                // d xhat = dy * gamma; d z = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                let g = gamma[ch];
                let mean_dx = g * db / n;
                let mean_dxx = g * dg / n;
                let is = bc.inv_std[ch];
                for (d, &x) in dy.iter_mut().zip(xhat) {
                    *d = is * (g * *d - mean_dx - x * mean_dxx);
                }
            }
            gemm(c, hw, c_in * 9, &dz, false, &bc.cols, true, T::one(), &mut grads.tensors[idx.weight].data);
            if k > 0 {
                let mut d_cols = vec![T::zero(); c_in * 9 * hw];
                gemm(c_in * 9, c, hw, &p.tensors[idx.weight].data, true, &dz, false, T::zero(), &mut d_cols);
                d_act = col2im(&d_cols, c_in, bc.h, bc.w);
            }
        }
    }

    /// Encoder -> projector -> predictor on the online network.
    pub fn forward_online(&self, x: &[T], frames: usize) -> Result<ForwardOnline<T>, NnError> {
        self.check_input(x, frames)?;
        let (embedding, encoder) = self.encode(&self.online, x, frames);
        let (projection, projector) = mlp_forward(&self.online, self.layout.proj, &embedding);
        let (delta, predictor) = mlp_forward(&self.online, self.layout.pred, &projection);
        let prediction = projection.iter().zip(&delta).map(|(&a, &b)| a + b).collect();
        Ok(ForwardOnline {
            embedding,
            projection,
            prediction,
            encoder,
            projector,
            predictor,
        })
    }

    /// Embedding only (the downstream representation).
    pub fn embed(&self, x: &[T], frames: usize) -> Result<Vec<T>, NnError> {
        self.check_input(x, frames)?;
        Ok(self.encode(&self.online, x, frames).0)
    }

    /// Target encoder -> projector. Never produces gradients.
    pub fn forward_target(&self, x: &[T], frames: usize) -> Result<Vec<T>, NnError> {
        self.check_input(x, frames)?;
        let (emb, _) = self.encode(&self.target, x, frames);
        Ok(mlp_forward(&self.target, self.layout.proj, &emb).0)
    }

    /// Backpropagate gradients of the projection and prediction outputs of
    /// one online forward pass into `grads`.
    pub fn backward_online(
        &self,
        fwd: &ForwardOnline<T>,
        d_projection: &[T],
        d_prediction: Option<&[T]>,
        grads: &mut ParamSet<T>,
    ) {
        let mut d_proj = d_projection.to_vec();
        if let Some(dp) = d_prediction {
            let through = mlp_backward(&self.online, self.layout.pred, &fwd.predictor, dp, grads);
            for ((d, &a), &b) in d_proj.iter_mut().zip(dp).zip(&through) {
                *d += a + b;
            }
        }
        let d_emb = mlp_backward(&self.online, self.layout.proj, &fwd.projector, &d_proj, grads);
        self.encode_backward(&fwd.encoder, &d_emb, grads);
    }

    /// Loss terms of one sample with two views:
    /// `l_ss = (byol(q1, z2) + byol(q2, z1)) / 2` and
    /// `l_sup = (mse(p1, s) + mse(p2, s)) / 2`.
    pub fn sample_loss(&self, v1: &[T], v2: &[T], frames: usize, sup: &[T]) -> Result<SampleLoss<T>, NnError> {
        self.check_sup(sup)?;
        let a = self.forward_online(v1, frames)?;
        let b = self.forward_online(v2, frames)?;
        let z1 = self.forward_target(v1, frames)?;
        let z2 = self.forward_target(v2, frames)?;
        let half = T::from_f64(0.5).unwrap();
        Ok(SampleLoss {
            l_ss: half * (byol_loss(&a.prediction, &z2) + byol_loss(&b.prediction, &z1)),
            l_sup: half * (sup_loss(&a.projection, sup) + sup_loss(&b.projection, sup)),
        })
    }

    fn check_sup(&self, sup: &[T]) -> Result<(), NnError> {
        if sup.len() != self.config.d_sup {
            return Err(NnError::Dimension {
                expected: self.config.d_sup,
                got: sup.len(),
            });
        }
        Ok(())
    }

    /// Loss terms of one sample plus `weight * d(alpha_ss l_ss + alpha_sup
    /// l_sup)` accumulated into `grads` (online parameters only).
    pub fn sample_loss_grad(
        &self,
        v1: &[T],
        v2: &[T],
        frames: usize,
        sup: &[T],
        weights: &HybridLossConfig,
        scale: T,
        grads: &mut ParamSet<T>,
    ) -> Result<SampleLoss<T>, NnError> {
        self.check_sup(sup)?;
        let a = self.forward_online(v1, frames)?;
        let b = self.forward_online(v2, frames)?;
        let z1 = self.forward_target(v1, frames)?;
        let z2 = self.forward_target(v2, frames)?;
        let half = T::from_f64(0.5).unwrap();
        let loss = SampleLoss {
            l_ss: half * (byol_loss(&a.prediction, &z2) + byol_loss(&b.prediction, &z1)),
            l_sup: half * (sup_loss(&a.projection, sup) + sup_loss(&b.projection, sup)),
        };
        let w_ss = scale * half * T::from_f64(weights.alpha_ss).unwrap();
        let w_sup = scale * half * T::from_f64(weights.alpha_sup).unwrap();
        for (fwd, other) in [(&a, &z2), (&b, &z1)] {
            let d_proj: Vec<T> = if weights.alpha_sup != 0.0 {
                sup_loss_grad(&fwd.projection, sup).into_iter().map(|g| g * w_sup).collect()
            } else {
                vec![T::zero(); fwd.projection.len()]
            };
            let d_pred: Option<Vec<T>> = (weights.alpha_ss != 0.0).then(|| {
                byol_loss_grad(&fwd.prediction, other)
                    .into_iter()
                    .map(|g| g * w_ss)
                    .collect()
            });
            self.backward_online(fwd, &d_proj, d_pred.as_deref(), grads);
        }
        Ok(loss)
    }
}
