use std::ops::Range;

use super::{AttentionMask, BlockConfig, LayerNorm, Linear, MultiHeadAttention};
use crate::tensor::{Graph, ParamStore, SeededRng, Var};
use crate::{Error, Result};

/// Position-wise `Linear -> GELU -> Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, cfg: BlockConfig, rng: &mut SeededRng) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.inner"), cfg.d_model, cfg.d_ff, rng),
            outer: Linear::new(store, &format!("{name}.outer"), cfg.d_ff, cfg.d_model, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, store, x)?;
        let h = g.gelu(h);
        self.outer.forward(g, store, h)
    }
}

fn check_width(g: &Graph, x: Var, d: usize, what: &str) -> Result<()> {
    match g.shape(x) {
        [_, w] if *w == d => Ok(()),
        s => Err(Error::Invalid(format!("{what} shape {s:?} does not have width {d}"))),
    }
}

/// Restricts the residual stream `x` and its normalized copy `h` to `rows`.
fn select_rows(g: &mut Graph, x: Var, h: Var, rows: &Range<usize>) -> Result<(Var, Var)> {
    let len = g.shape(x)[0];
    if rows.start == 0 && rows.end == len {
        return Ok((x, h));
    }
    if rows.is_empty() || rows.end > len {
        return Err(Error::Invalid(format!("row range {rows:?} outside 0..{len}")));
    }
    Ok((
        g.slice_rows(x, rows.start, rows.len())?,
        g.slice_rows(h, rows.start, rows.len())?,
    ))
}

/// Pre-norm residual add: `x + dropout(sublayer_out)`.
fn residual(g: &mut Graph, x: Var, sub: Var, rate: f64) -> Result<Var> {
    let sub = g.dropout(sub, rate);
    Ok(g.add(x, sub)?)
}

/// Pre-norm encoder block: self-attention then feed-forward, each residual.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub cfg: BlockConfig,
    pub norm_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: BlockConfig, rng: &mut SeededRng) -> Self {
        Self {
            cfg,
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), cfg.d_model),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg, rng),
            norm_ff: LayerNorm::new(store, &format!("{name}.norm_ff"), cfg.d_model),
            ff: FeedForward::new(store, &format!("{name}.ff"), cfg, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        let len = g.shape(x).first().copied().unwrap_or(0);
        self.forward_rows(g, store, x, 0..len, mask)
    }

    /// Output rows `rows` only; every row still serves as a key. `mask`, if
    /// given, is `rows.len() x len`. Equal to slicing the full output.
    pub fn forward_rows(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        rows: Range<usize>,
        mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        check_width(g, x, self.cfg.d_model, "encoder input")?;
        let h = self.norm_attn.forward(g, store, x)?;
        let (xq, hq) = select_rows(g, x, h, &rows)?;
        let a = self.attn.forward(g, store, hq, h, mask)?;
        let x = residual(g, xq, a, self.cfg.dropout)?;
        let h = self.norm_ff.forward(g, store, x)?;
        let f = self.ff.forward(g, store, h)?;
        residual(g, x, f, self.cfg.dropout)
    }

    /// Zeroes the sublayer output projections so the block passes its input through.
    pub fn zero_output_projections(&self, store: &mut ParamStore) {
        self.attn.output.zero(store);
        self.ff.outer.zero(store);
    }
}

/// Pre-norm decoder block: masked self-attention, cross-attention over
/// `memory`, then feed-forward.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub cfg: BlockConfig,
    pub norm_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm_cross: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: BlockConfig, rng: &mut SeededRng) -> Self {
        Self {
            cfg,
            norm_self: LayerNorm::new(store, &format!("{name}.norm_self"), cfg.d_model),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), cfg, rng),
            norm_cross: LayerNorm::new(store, &format!("{name}.norm_cross"), cfg.d_model),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), cfg, rng),
            norm_ff: LayerNorm::new(store, &format!("{name}.norm_ff"), cfg.d_model),
            ff: FeedForward::new(store, &format!("{name}.ff"), cfg, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        memory: Var,
        self_mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        let len = g.shape(x).first().copied().unwrap_or(0);
        self.forward_rows(g, store, x, memory, 0..len, self_mask)
    }

    /// Output rows `rows` only, as for [`EncoderLayer::forward_rows`].
    pub fn forward_rows(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        memory: Var,
        rows: Range<usize>,
        self_mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        check_width(g, x, self.cfg.d_model, "decoder input")?;
        check_width(g, memory, self.cfg.d_model, "decoder memory")?;
        let h = self.norm_self.forward(g, store, x)?;
        let (xq, hq) = select_rows(g, x, h, &rows)?;
        let a = self.self_attn.forward(g, store, hq, h, self_mask)?;
        let x = residual(g, xq, a, self.cfg.dropout)?;
        let h = self.norm_cross.forward(g, store, x)?;
        let c = self.cross_attn.forward(g, store, h, memory, None)?;
        let x = residual(g, x, c, self.cfg.dropout)?;
        let h = self.norm_ff.forward(g, store, x)?;
        let f = self.ff.forward(g, store, h)?;
        residual(g, x, f, self.cfg.dropout)
    }

    pub fn zero_output_projections(&self, store: &mut ParamStore) {
        self.self_attn.output.zero(store);
        self.cross_attn.output.zero(store);
        self.ff.outer.zero(store);
    }
}
