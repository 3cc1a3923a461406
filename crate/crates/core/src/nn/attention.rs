use super::{BlockConfig, Linear};
use crate::tensor::{Graph, ParamStore, SeededRng, Var};
use crate::{Error, Result};

/// Boolean admissibility matrix: `allowed(i, j)` means query `i` may attend to key `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "mask has {} entries, expected {rows}x{cols}",
                allowed.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            allowed,
        })
    }

    /// Lower-triangular mask: position `t` sees positions `0..=t`.
    pub fn causal(len: usize) -> Self {
        let allowed = (0..len * len).map(|i| i % len <= i / len).collect();
        Self {
            rows: len,
            cols: len,
            allowed,
        }
    }

    /// Every query sees the first `valid` keys only.
    pub fn key_padding(rows: usize, cols: usize, valid: usize) -> Self {
        let allowed = (0..rows * cols).map(|i| i % cols < valid).collect();
        Self {
            rows,
            cols,
            allowed,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.allowed
    }
}

/// Scaled dot-product attention split over `n_heads` column groups.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub cfg: BlockConfig,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, cfg: BlockConfig, rng: &mut SeededRng) -> Self {
        let d = cfg.d_model;
        Self {
            cfg,
            query: Linear::new(store, &format!("{name}.query"), d, d, rng),
            key: Linear::new(store, &format!("{name}.key"), d, d, rng),
            value: Linear::new(store, &format!("{name}.value"), d, d, rng),
            output: Linear::new(store, &format!("{name}.output"), d, d, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        q_in: Var,
        kv_in: Var,
        mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        Ok(self.forward_with_weights(g, store, q_in, kv_in, mask)?.0)
    }

    /// Also returns the per-head `len_q x len_k` attention weight nodes.
    pub fn forward_with_weights(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        q_in: Var,
        kv_in: Var,
        mask: Option<&AttentionMask>,
    ) -> Result<(Var, Vec<Var>)> {
        let d = self.cfg.d_model;
        for v in [q_in, kv_in] {
            if g.shape(v).len() != 2 || g.shape(v)[1] != d {
                return Err(Error::Invalid(format!(
                    "attention input shape {:?} does not have width {d}",
                    g.shape(v)
                )));
            }
        }
        let (len_q, len_k) = (g.shape(q_in)[0], g.shape(kv_in)[0]);
        if let Some(m) = mask {
            if m.shape() != (len_q, len_k) {
                return Err(Error::Invalid(format!(
                    "mask shape {:?} does not match ({len_q}, {len_k})",
                    m.shape()
                )));
            }
        }
        let q = self.query.forward(g, store, q_in)?;
        let k = self.key.forward(g, store, kv_in)?;
        let v = self.value.forward(g, store, kv_in)?;
        let dh = self.cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.n_heads);
        let mut weights = Vec::with_capacity(self.cfg.n_heads);
        for h in 0..self.cfg.n_heads {
            let (qh, kh, vh) = if self.cfg.n_heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, scale);
            let w = match mask {
                Some(m) => g.masked_softmax(scores, m.as_slice())?,
                None => g.softmax(scores, 1)?,
            };
            weights.push(w);
            heads.push(g.matmul(w, vh)?);
        }
        let joined = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        Ok((self.output.forward(g, store, joined)?, weights))
    }
}
