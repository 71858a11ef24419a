use serde::{Deserialize, Serialize};

use super::Real;

const NORM_FLOOR: f64 = 1e-12;

fn norm<T: Real>(v: &[T]) -> T {
    let n = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let floor = T::from_f64(NORM_FLOOR).unwrap();
    if n < floor {
        log::warn!("byol_loss: near-zero input norm {n}; clamped to {NORM_FLOOR}");
        floor
    } else {
        n
    }
}

/// Squared distance between L2-normalised vectors, `2 - 2 cos(pred, targ)`.
pub fn byol_loss<T: Real>(pred: &[T], targ: &[T]) -> T {
    assert_eq!(pred.len(), targ.len());
    let (np, nt) = (norm(pred), norm(targ));
    pred.iter()
        .zip(targ)
        .map(|(&p, &t)| {
            let d = p / np - t / nt;
            d * d
        })
        .sum()
}

/// Gradient of [`byol_loss`] with respect to `pred` (the target is a
/// constant).
pub fn byol_loss_grad<T: Real>(pred: &[T], targ: &[T]) -> Vec<T> {
    let (np, nt) = (norm(pred), norm(targ));
    let two = T::from_f64(2.0).unwrap();
    let ph: Vec<T> = pred.iter().map(|&p| p / np).collect();
    let g: Vec<T> = ph.iter().zip(targ).map(|(&p, &t)| p - t / nt).collect();
    let raw_norm = pred.iter().map(|&x| x * x).sum::<T>().sqrt();
    if raw_norm < T::from_f64(NORM_FLOOR).unwrap() {
        // clamped: the normaliser is a constant
        return g.iter().map(|&gi| two * gi / np).collect();
    }
    let proj: T = ph.iter().zip(&g).map(|(&a, &b)| a * b).sum();
    ph.iter()
        .zip(&g)
        .map(|(&p, &gi)| two * (gi - p * proj) / np)
        .collect()
}

/// Mean squared error over the dimensions.
pub fn sup_loss<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let d = T::from_usize(a.len()).unwrap();
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / d
}

pub fn sup_loss_grad<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let scale = T::from_f64(2.0).unwrap() / T::from_usize(a.len()).unwrap();
    a.iter().zip(b).map(|(&x, &y)| scale * (x - y)).collect()
}

/// Weights of the self-supervised and supervised terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridLossConfig {
    pub alpha_ss: f64,
    pub alpha_sup: f64,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        Self {
            alpha_ss: 1.0,
            alpha_sup: 1.0,
        }
    }
}

impl HybridLossConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha_ss >= 0.0 && self.alpha_sup >= 0.0) {
            return Err("loss weights must be non-negative".into());
        }
        if self.alpha_ss + self.alpha_sup <= 0.0 {
            return Err("alpha_ss + alpha_sup must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub l_ss: f64,
    pub l_sup: f64,
    pub l_hybrid: f64,
}

/// `l_hybrid = alpha_ss * l_ss + alpha_sup * l_sup`.
pub fn hybrid_loss(l_ss: f64, l_sup: f64, cfg: &HybridLossConfig) -> LossParts {
    LossParts {
        l_ss,
        l_sup,
        l_hybrid: cfg.alpha_ss * l_ss + cfg.alpha_sup * l_sup,
    }
}
