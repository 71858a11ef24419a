use serde::{Deserialize, Serialize};

use super::{NnError, ParamSet, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One update. A non-finite gradient aborts before anything is modified.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<(), NnError> {
        for (name, g) in grads.names.iter().zip(&grads.tensors) {
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient(name.clone()));
            }
        }
        self.t += 1;
        let c = &self.config;
        let b1 = T::from_f64(c.beta1).unwrap();
        let b2 = T::from_f64(c.beta2).unwrap();
        let one = T::one();
        let bc1 = T::from_f64(1.0 - c.beta1.powi(self.t as i32)).unwrap();
        let bc2 = T::from_f64(1.0 - c.beta2.powi(self.t as i32)).unwrap();
        let lr = T::from_f64(c.lr).unwrap();
        let eps = T::from_f64(c.eps).unwrap();
        for (k, g) in grads.tensors.iter().enumerate() {
            let p = &mut params.tensors[k].data;
            let m = &mut self.m.tensors[k].data;
            let v = &mut self.v.tensors[k].data;
            for i in 0..g.data.len() {
                let gi = g.data[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `target <- tau * target + (1 - tau) * online` for every target tensor
/// (the online set may hold extra trailing tensors, e.g. the predictor).
pub fn ema_update<T: Real>(target: &mut ParamSet<T>, online: &ParamSet<T>, tau: f64) {
    assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1]");
    if tau == 1.0 {
        return;
    }
    let t = T::from_f64(tau).unwrap();
    let u = T::from_f64(1.0 - tau).unwrap();
    for (a, b) in target.tensors.iter_mut().zip(&online.tensors) {
        debug_assert_eq!(a.shape, b.shape);
        for (x, &y) in a.data.iter_mut().zip(&b.data) {
            *x = t * *x + u * y;
        }
    }
}
