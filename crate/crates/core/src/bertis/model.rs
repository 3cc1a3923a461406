use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::vocab::{tokenize, Vocabulary, MAX_LEN};
use crate::nn::{
    checkpoint, sum_input_embeddings, AttentionMask, BlockConfig, EmbeddingTable, EncoderLayer,
    LayerNorm, Linear, TokenSequence,
};
use crate::schema::{ImageSchemaLabel, NUM_SCHEMAS};
use crate::tensor::{kernels, Graph, ParamStore, SeededRng, Var};
use crate::{Error, Result};

pub const CHECKPOINT_KIND: &str = "bertis";

/// Encoder shape of the schema classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BertisArch {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub dropout: f64,
    pub max_len: usize,
}

impl Default for BertisArch {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_heads: 4,
            n_layers: 4,
            dropout: 0.1,
            max_len: MAX_LEN,
        }
    }
}

impl BertisArch {
    pub fn block(&self) -> Result<BlockConfig> {
        if self.n_layers == 0 || self.max_len < 2 {
            return Err(Error::Config("bertis needs at least one layer and max_len >= 2".into()));
        }
        let cfg = BlockConfig::new(self.d_model, self.n_heads)?.with_dropout(self.dropout);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Summed token/segment/position embeddings, a pre-norm encoder stack, a
/// final layer norm and a 14-way dense head on the `[CLS]` position.
#[derive(Debug, Clone, PartialEq)]
pub struct BertisModel {
    pub arch: BertisArch,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    tok: EmbeddingTable,
    seg: EmbeddingTable,
    pos: EmbeddingTable,
    layers: Vec<EncoderLayer>,
    final_norm: LayerNorm,
    head: Linear,
}

impl BertisModel {
    pub fn new(arch: BertisArch, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let block = arch.block()?;
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let d = arch.d_model;
        let tok = EmbeddingTable::new(&mut store, "bertis.tok", vocab.len(), d, &mut rng);
        let seg = EmbeddingTable::new(&mut store, "bertis.seg", 2, d, &mut rng);
        let pos = EmbeddingTable::new(&mut store, "bertis.pos", arch.max_len, d, &mut rng);
        let layers = (0..arch.n_layers)
            .map(|i| EncoderLayer::new(&mut store, &format!("bertis.layer{i}"), block, &mut rng))
            .collect();
        let final_norm = LayerNorm::new(&mut store, "bertis.final_norm", d);
        let head = Linear::new(&mut store, "bertis.head", d, NUM_SCHEMAS, &mut rng);
        Ok(Self {
            arch,
            vocab,
            store,
            tok,
            seg,
            pos,
            layers,
            final_norm,
            head,
        })
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(text, &self.vocab, self.arch.max_len)
    }

    /// `1 x 14` logits. Only the unpadded prefix is run: padding positions
    /// are masked out as keys, so they cannot affect the `[CLS]` row.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, tokens: &TokenSequence) -> Result<Var> {
        let n = tokens.len();
        if n == 0 || n > self.arch.max_len {
            return Err(Error::Invalid(format!("token sequence of length {n}")));
        }
        let seq = tokens.prefix(n);
        let mut x = sum_input_embeddings(g, store, &seq, [&self.tok, &self.seg, &self.pos])?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = if i == last {
                layer.forward_rows(g, store, x, 0..1, None)?
            } else {
                layer.forward(g, store, x, None)?
            };
        }
        self.head_on_cls(g, store, x)
    }

    /// Reference path over all `max_len` positions with a key-padding mask.
    pub fn logits_padded(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        tokens: &TokenSequence,
    ) -> Result<Var> {
        let len = tokens.token_ids.len();
        let valid = tokens.len();
        if tokens.attention_mask[..valid].iter().any(|m| !m) {
            return Err(Error::Invalid("attention mask must be a prefix".into()));
        }
        let mask = AttentionMask::key_padding(len, len, valid);
        let mut x = sum_input_embeddings(g, store, tokens, [&self.tok, &self.seg, &self.pos])?;
        for layer in &self.layers {
            x = layer.forward(g, store, x, Some(&mask))?;
        }
        self.head_on_cls(g, store, x)
    }

    fn head_on_cls(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let cls = g.slice_rows(x, 0, 1)?;
        let cls = self.final_norm.forward(g, store, cls)?;
        self.head.forward(g, store, cls)
    }

    /// Softmax distribution over the 14 classes and its argmax.
    pub fn classify(&self, text: &str) -> Result<([f64; NUM_SCHEMAS], ImageSchemaLabel)> {
        let mut g = Graph::new();
        let logits = self.logits(&mut g, &self.store, &self.tokenize(text))?;
        let probs = kernels::softmax_axis(g.value(logits), 1, NUM_SCHEMAS, 1);
        let mut dist = [0.0; NUM_SCHEMAS];
        dist.copy_from_slice(&probs);
        let best = (0..NUM_SCHEMAS)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("nonempty");
        Ok((dist, ImageSchemaLabel::ALL[best]))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::save(
            dir,
            CHECKPOINT_KIND,
            serde_json::to_value(self.arch)?,
            json!({ "vocab": self.vocab.tokens() }),
            &self.store,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (manifest, tensors) = checkpoint::load(dir, CHECKPOINT_KIND)?;
        let arch: BertisArch = serde_json::from_value(manifest.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad bertis config: {e}")))?;
        let tokens: Vec<String> = serde_json::from_value(manifest.extra["vocab"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad bertis vocabulary: {e}")))?;
        let mut model = Self::new(arch, Vocabulary::from_tokens(tokens)?, 0)?;
        checkpoint::restore(&mut model.store, &manifest, &tensors)?;
        Ok(model)
    }
}

/// Free-function form of [`BertisModel::classify`].
pub fn classify_schema(text: &str, model: &BertisModel) -> Result<([f64; NUM_SCHEMAS], ImageSchemaLabel)> {
    model.classify(text)
}
