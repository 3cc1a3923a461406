use std::collections::HashMap;

use crate::nn::TokenSequence;
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
pub const MAX_LEN: usize = 32;

/// Cased word vocabulary with the four special tokens at ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(Error::Invalid("vocabulary must start with [PAD] [UNK] [CLS] [SEP]".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Splits on whitespace, then detaches every punctuation character as its
/// own token. Case is preserved.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() {
                word.push(ch);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Most frequent tokens first, ties in lexicographic order; `max_size`
/// counts the special tokens.
pub fn build_vocab<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Vocabulary> {
    if max_size < SPECIALS.len() {
        return Err(Error::Config(format!("vocabulary size {max_size} cannot hold the special tokens")));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut n_texts = 0;
    for text in texts {
        n_texts += 1;
        for w in split_words(text) {
            if !SPECIALS.contains(&w.as_str()) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    if n_texts == 0 {
        return Err(Error::Invalid("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(w, _)| w))
        .take(max_size)
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// `[CLS] w1 .. wn [SEP]` truncated to `max_len` (the final `[SEP]` is
/// kept) and padded with `[PAD]` to `max_len`.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let max_len = max_len.max(2);
    let mut ids = vec![CLS];
    ids.extend(split_words(text).iter().take(max_len - 2).map(|w| vocab.id(w)));
    ids.push(SEP);
    let n = ids.len();
    ids.resize(max_len, PAD);
    TokenSequence {
        token_ids: ids,
        segment_ids: vec![0; max_len],
        position_ids: (0..max_len).collect(),
        attention_mask: (0..max_len).map(|i| i < n).collect(),
    }
}
