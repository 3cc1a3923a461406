//! Transformer building blocks shared by the text classifier and the gesture model.

mod attention;
pub mod checkpoint;
mod embedding;
mod layers;

use serde::{Deserialize, Serialize};

use crate::tensor::{Graph, ParamId, ParamStore, SeededRng, Tensor, Var};
use crate::{Error, Result};

pub use attention::{AttentionMask, MultiHeadAttention};
pub use embedding::{sum_input_embeddings, EmbeddingTable, TokenSequence};
pub use layers::{DecoderLayer, EncoderLayer, FeedForward};

/// Width, head count and feed-forward size of one transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
}

impl BlockConfig {
    /// `d_ff = 4 * d_model`, dropout 0.1.
    pub fn new(d_model: usize, n_heads: usize) -> Result<Self> {
        let cfg = Self {
            d_model,
            n_heads,
            d_ff: 4 * d_model,
            dropout: 0.1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(Error::Config(format!("block sizes must be positive: {self:?}")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }
}

/// Affine map `x W + b` with `W: in x out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), in_dim, out_dim, rng);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        Ok(g.add_row(xw, b)?)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        for id in [self.weight, self.bias] {
            store.get_mut(id).data_mut().fill(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[width], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[width])),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        Ok(g.layer_norm(x, gamma, beta)?)
    }
}

/// `PE(pos, 2i) = sin(pos / 10000^(2i/d))`, `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn sinusoidal_positional_encoding(length: usize, d_model: usize) -> Tensor {
    let mut t = Tensor::zeros(&[length.max(1), d_model.max(1)]);
    let d = d_model as f64;
    for pos in 0..length {
        for col in 0..d_model {
            let pair = (col / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(pair / d);
            t.data_mut()[pos * d_model + col] = if col % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

#[cfg(test)]
mod tests;
