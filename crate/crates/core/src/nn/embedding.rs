use crate::tensor::{Graph, ParamId, ParamStore, SeededRng, Tensor, Var};
use crate::{Error, Result};

/// Learned lookup table of `vocab_size` rows of width `d_model`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingTable {
    pub weight: ParamId,
    pub vocab_size: usize,
    pub d_model: usize,
}

impl EmbeddingTable {
    /// Rows drawn uniformly from `±0.1`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        d_model: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let data = (0..vocab_size * d_model)
            .map(|_| rng.uniform(-0.1, 0.1))
            .collect();
        let t = Tensor::new(vec![vocab_size, d_model], data).expect("embedding shape");
        Self {
            weight: store.add(format!("{name}.weight"), t),
            vocab_size,
            d_model,
        }
    }

    pub fn lookup(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab_size) {
            return Err(Error::Invalid(format!(
                "embedding id {bad} out of range for table of size {}",
                self.vocab_size
            )));
        }
        let w = g.param(store, self.weight);
        Ok(g.gather_rows(w, ids)?)
    }
}

/// `[CLS] t1 .. tn [SEP] [PAD]*` with parallel segment/position ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub token_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub position_ids: Vec<usize>,
    /// `true` for real tokens, `false` for padding.
    pub attention_mask: Vec<bool>,
}

impl TokenSequence {
    /// Number of non-padding positions.
    pub fn len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first `n` positions of every id list.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            token_ids: self.token_ids[..n].to_vec(),
            segment_ids: self.segment_ids[..n].to_vec(),
            position_ids: self.position_ids[..n].to_vec(),
            attention_mask: self.attention_mask[..n].to_vec(),
        }
    }
}

/// Token + segment + position lookups summed row by row.
pub fn sum_input_embeddings(
    g: &mut Graph,
    store: &ParamStore,
    tokens: &TokenSequence,
    tables: [&EmbeddingTable; 3],
) -> Result<Var> {
    let n = tokens.token_ids.len();
    if tokens.segment_ids.len() != n || tokens.position_ids.len() != n || n == 0 {
        return Err(Error::Invalid("token, segment and position ids differ in length".into()));
    }
    let [tok, seg, pos] = tables;
    let a = tok.lookup(g, store, &tokens.token_ids)?;
    let b = seg.lookup(g, store, &tokens.segment_ids)?;
    let c = pos.lookup(g, store, &tokens.position_ids)?;
    let ab = g.add(a, b)?;
    Ok(g.add(ab, c)?)
}
