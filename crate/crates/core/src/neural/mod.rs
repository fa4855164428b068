//! Minimal neural substrate sized for small character-level models: dense
//! tensors (via ndarray), layer forward/backward passes, losses, Adam, and
//! a finite-difference gradient-check harness. All computation is in f64;
//! gradients are hand-derived per layer and validated by [`gradcheck`].

pub mod adam;
pub mod container;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod lstm;

use thiserror::Error;

/// 2-D tensor of f64 (row-major).
pub type Mat = ndarray::Array2<f64>;
/// 3-D tensor of f64, typically batch x time x features.
pub type Ten3 = ndarray::Array3<f64>;
/// 1-D tensor of f64.
pub type Vec1 = ndarray::Array1<f64>;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("character id {id} out of range for vocabulary size {vocab}")]
    IdOutOfRange { id: usize, vocab: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss encountered: {0}")]
    NonFiniteLoss(f64),
}

/// Named, flattened views over a model's parameter blocks. The block order
/// is the model's serialization and optimizer-state order; it must be
/// stable.
pub trait ParamBlocks {
    fn block_names(&self) -> Vec<&'static str>;
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
