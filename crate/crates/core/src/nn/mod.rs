//! Differentiable building blocks with hand-written backpropagation.
//!
//! Models are generic over the scalar type: training runs in `f32`, gradient
//! checks run in `f64`.

mod checkpoint;
mod loss;
mod model;
mod ops;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{byol_loss, byol_loss_grad, hybrid_loss, sup_loss, sup_loss_grad, HybridLossConfig, LossParts};
pub use model::{
    EncoderCache, ForwardOnline, HeadCache, Layout, ModelConfig, ModelState, SampleLoss,
};
pub use ops::{gemm, Real};
pub use optim::{ema_update, Adam, AdamConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input shape mismatch: expected {expected} mel bins and >= {min_frames} frames, got {got:?}")]
    Shape {
        expected: usize,
        min_frames: usize,
        got: (usize, usize),
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite gradient in '{0}'; optimizer step aborted")]
    NonFiniteGradient(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    /// The first `n` tensors.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            names: self.names[..n].to_vec(),
            tensors: self.tensors[..n].to_vec(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + scale * *y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Euclidean norm over a subset of tensors.
    pub fn norm_of(&self, indices: impl IntoIterator<Item = usize>) -> f64 {
        indices
            .into_iter()
            .flat_map(|i| self.tensors[i].data.iter())
            .map(|v| v.to_f64().unwrap().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Order-sensitive digest of every bit, for "untouched" assertions.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for v in &t.data {
                h ^= v.to_f64().unwrap().to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from(*v).unwrap()).collect(),
                })
                .collect(),
        }
    }
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}
