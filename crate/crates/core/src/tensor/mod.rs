//! Dense `f64` tensors, reverse-mode autodiff and the Adam optimizer.

mod adam;
mod array;
mod graph;
pub mod gradcheck;
pub mod kernels;
mod params;
mod rng;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use array::{Tensor, TENSOR_MAGIC};
pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use rng::SeededRng;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {0:?}: dimensions must be positive")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("attention mask leaves a row with no admissible position")]
    EmptyMaskRow,
    #[error("malformed tensor data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Eager matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let mut g = Graph::new();
    let (va, vb) = (g.input(a), g.input(b));
    let out = g.matmul(va, vb)?;
    Ok(g.tensor(out))
}

/// Eager softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor, TensorError> {
    let mut g = Graph::new();
    let v = g.input(x);
    let out = g.softmax(v, axis)?;
    Ok(g.tensor(out))
}

/// Eager layer normalization over the last axis.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor, TensorError> {
    let mut g = Graph::new();
    let (vx, vg, vb) = (g.input(x), g.input(gamma), g.input(beta));
    let out = g.layer_norm(vx, vg, vb)?;
    Ok(g.tensor(out))
}

#[cfg(test)]
mod tests;
