use serde::{Deserialize, Serialize};

use super::model::{BertisArch, BertisModel};
use super::sampling::oversample;
use super::vocab::build_vocab;
use crate::data::LabeledText;
use crate::nn::TokenSequence;
use crate::tensor::{AdamConfig, AdamState, Graph, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BertisTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation accuracy before stopping.
    pub patience: usize,
    /// Vocabulary size including the four special tokens.
    pub vocab_size: usize,
    /// Balance training classes by duplication (training split only).
    pub oversample: bool,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
}

impl Default for BertisTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 100,
            patience: 5,
            vocab_size: 4000,
            oversample: true,
            clip_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BertisConfig {
    pub model: BertisArch,
    pub train: BertisTrainConfig,
}

impl BertisConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.block()?;
        let t = &self.train;
        if t.batch_size == 0 || t.max_epochs == 0 || !(t.lr > 0.0) || t.clip_norm < 0.0 {
            return Err(Error::Config(format!("invalid bertis training settings: {t:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BertisHistory {
    /// Mean cross-entropy of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

pub fn accuracy(model: &BertisModel, data: &[LabeledText]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Invalid("accuracy of an empty set".into()));
    }
    let mut correct = 0;
    for s in data {
        if model.classify(&s.text)?.1 == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch Adam on cross-entropy with early stopping on validation
/// accuracy. The vocabulary is built from the training texts only. Returns
/// the parameters of the best validation epoch.
pub fn train_bertis(
    train: &[LabeledText],
    val: &[LabeledText],
    cfg: &BertisConfig,
    seed: u64,
) -> Result<(BertisModel, BertisHistory)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Invalid("training and validation splits must be nonempty".into()));
    }
    let tc = cfg.train;
    let root = SeededRng::new(seed);
    let examples = if tc.oversample {
        oversample(train, &mut root.fork(1))?
    } else {
        train.to_vec()
    };
    let vocab = build_vocab(train.iter().map(|s| s.text.as_str()), tc.vocab_size)?;
    let mut model = BertisModel::new(cfg.model, vocab, root.fork(2).next_u64())?;
    let encoded: Vec<(TokenSequence, usize)> = examples
        .iter()
        .map(|s| (model.tokenize(&s.text), s.label.index()))
        .collect();

    let adam_cfg = AdamConfig {
        lr: tc.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::for_store(adam_cfg, &model.store);
    let mut order_rng = root.fork(3);
    let dropout_root = root.fork(4);
    let mut history = BertisHistory {
        best_val_accuracy: f64::NEG_INFINITY,
        ..BertisHistory::default()
    };
    let mut best = model.store.clone();
    let mut seen = 0u64;

    for epoch in 0..tc.max_epochs {
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(tc.batch_size) {
            model.store.clear_grads();
            let mut batch_loss = 0.0;
            for &i in batch {
                let (tokens, label) = &encoded[i];
                let mut g = Graph::training(dropout_root.fork(seen));
                seen += 1;
                let logits = model.logits(&mut g, &model.store, tokens)?;
                let loss = g.cross_entropy(logits, &[*label])?;
                batch_loss += g.value(loss)[0];
                g.backward(loss)?.accumulate_into(&mut model.store);
            }
            let mean = batch_loss / batch.len() as f64;
            if !mean.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("loss became {mean} at step {}", history.step_losses.len()),
                });
            }
            model.store.scale_grads(1.0 / batch.len() as f64);
            if tc.clip_norm > 0.0 {
                model.store.clip_grad_norm(tc.clip_norm);
            }
            adam.step_store(&mut model.store)?;
            history.step_losses.push(mean);
            epoch_loss += batch_loss;
        }
        history.epoch_losses.push(epoch_loss / encoded.len() as f64);
        model.store.clear_grads();
        let acc = accuracy(&model, val)?;
        history.val_accuracy.push(acc);
        if acc > history.best_val_accuracy {
            history.best_val_accuracy = acc;
            history.best_epoch = epoch;
            best = model.store.clone();
        } else if epoch - history.best_epoch >= tc.patience {
            break;
        }
    }
    model.store = best;
    Ok((model, history))
}
