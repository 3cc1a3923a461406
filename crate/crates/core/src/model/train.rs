use serde::{Deserialize, Serialize};

use super::net::{Meta4Arch, Meta4Model, SchemaMode};
use crate::bertis::BertisModel;
use crate::data::SegmentSample;
use crate::eval::rmse;
use crate::schema::{ImageSchemaLabel, NUM_SCHEMAS};
use crate::tensor::{AdamConfig, AdamState, Graph, SeededRng, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Meta4TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation RMSE before stopping.
    pub patience: usize,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    /// Share of the training samples held out for checkpoint selection.
    pub val_fraction: f64,
    /// Standard deviation of Gaussian noise added to the ground-truth frames
    /// the decoder reads during teacher forcing (targets stay clean). Makes
    /// the decoder tolerate its own errors at rollout time.
    pub input_noise: f64,
    /// Cosine-anneal the learning rate to `min_lr_ratio * lr` over
    /// `max_epochs`; 1.0 keeps it constant.
    pub min_lr_ratio: f64,
}

impl Default for Meta4TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 60,
            patience: 15,
            clip_norm: 1.0,
            val_fraction: 0.1,
            input_noise: 0.1,
            min_lr_ratio: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Meta4Config {
    pub model: Meta4Arch,
    pub train: Meta4TrainConfig,
}

impl Meta4Config {
    pub fn validate(&self) -> Result<()> {
        self.model.audio_block()?;
        self.model.decoder_block()?;
        let t = &self.train;
        if t.batch_size == 0
            || t.max_epochs == 0
            || !(t.lr > 0.0)
            || t.clip_norm < 0.0
            || !(0.0..1.0).contains(&t.val_fraction)
            || !(t.input_noise >= 0.0 && t.input_noise.is_finite())
            || !(0.0..=1.0).contains(&t.min_lr_ratio)
        {
            return Err(Error::Config(format!("invalid meta4 training settings: {t:?}")));
        }
        Ok(())
    }
}

/// A segment reduced to what training and evaluation consume.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub speaker_id: String,
    /// Raw log-mel patches, `count x 256`.
    pub patches: Tensor,
    /// Schema vector for the full condition.
    pub schema: [f64; NUM_SCHEMAS],
    /// The schema label the segment is taken to carry (override or argmax).
    pub label: ImageSchemaLabel,
    /// Normalized ground-truth poses, `64 x 22`.
    pub target: Tensor,
}

/// The schema vector of a segment: a one-hot of its override when set,
/// otherwise the frozen classifier's output in the requested form.
pub fn schema_vector(
    sample: &SegmentSample,
    bertis: Option<&BertisModel>,
    mode: SchemaMode,
) -> Result<([f64; NUM_SCHEMAS], ImageSchemaLabel)> {
    if let Some(label) = sample.schema {
        return Ok((label.one_hot(), label));
    }
    let model = bertis.ok_or_else(|| {
        Error::Invalid(format!(
            "segment {} has no schema override and no classifier was given",
            sample.id
        ))
    })?;
    let (dist, label) = model.classify(&sample.transcript)?;
    Ok(match mode {
        SchemaMode::Distribution => (dist, label),
        SchemaMode::OneHot => (label.one_hot(), label),
    })
}

pub fn prepare_samples(
    samples: &[SegmentSample],
    bertis: Option<&BertisModel>,
    mode: SchemaMode,
) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|s| {
            let (schema, label) = schema_vector(s, bertis, mode)?;
            Ok(PreparedSample {
                id: s.id.clone(),
                speaker_id: s.speaker_id.clone(),
                patches: Meta4Model::patches(&s.mel)?,
                schema,
                label,
                target: s.poses.data.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta4History {
    /// Mean teacher-forced MSE of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    /// Mean per-sample RMSE of generated sequences on the validation samples.
    pub val_rmse: Vec<f64>,
    pub val_ids: Vec<String>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

/// Mean and standard deviation over every patch value.
fn patch_stats(data: &[&PreparedSample]) -> (f64, f64) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for s in data {
        for &v in s.patches.data() {
            n += 1;
            sum += v;
            sq += v * v;
        }
    }
    let mean = sum / n.max(1) as f64;
    let var = (sq / n.max(1) as f64 - mean * mean).max(0.0);
    (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
}

/// Validation indices: a seeded `val_fraction` share, at least one and never
/// all. A single-sample set validates on that sample.
fn split_indices(n: usize, fraction: f64, rng: &mut SeededRng) -> (Vec<usize>, Vec<usize>) {
    if n == 1 {
        return (vec![0], vec![0]);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut val = idx[..k].to_vec();
    let mut train = idx[k..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn mean_generated_rmse(model: &Meta4Model, data: &[&PreparedSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        let pred = model.predict_patches(&model.standardize(&s.patches), &s.schema)?;
        total += rmse(pred.data(), s.target.data())?;
    }
    Ok(total / data.len() as f64)
}

/// Prepares the segments with the frozen classifier, then trains.
pub fn train_meta4(
    dataset: &[SegmentSample],
    bertis: Option<&BertisModel>,
    cfg: &Meta4Config,
    seed: u64,
) -> Result<(Meta4Model, Meta4History)> {
    let prepared = prepare_samples(dataset, bertis, cfg.model.schema_mode)?;
    train_meta4_prepared(&prepared, cfg, seed)
}

/// Teacher-forced MSE with mini-batch Adam; keeps the epoch with the lowest
/// validation RMSE of autoregressively generated sequences.
pub fn train_meta4_prepared(
    data: &[PreparedSample],
    cfg: &Meta4Config,
    seed: u64,
) -> Result<(Meta4Model, Meta4History)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Invalid("cannot train on an empty dataset".into()));
    }
    let tc = cfg.train;
    let root = SeededRng::new(seed);
    let mut model = Meta4Model::new(cfg.model, root.fork(1).next_u64())?;
    let (train_idx, val_idx) = split_indices(data.len(), tc.val_fraction, &mut root.fork(2));
    let train: Vec<&PreparedSample> = train_idx.iter().map(|&i| &data[i]).collect();
    let val: Vec<&PreparedSample> = val_idx.iter().map(|&i| &data[i]).collect();
    (model.patch_mean, model.patch_std) = patch_stats(&train);
    // Generation below needs the flag; it only marks that weights are being fitted.
    model.trained = true;

    let mut adam = AdamState::for_store(AdamConfig { lr: tc.lr, ..AdamConfig::default() }, &model.store);
    let mut order_rng = root.fork(3);
    let dropout_root = root.fork(4);
    let noise_root = root.fork(5);
    let mut history = Meta4History {
        val_ids: val.iter().map(|s| s.id.clone()).collect(),
        best_val_rmse: f64::INFINITY,
        ..Meta4History::default()
    };
    let mut best = model.store.clone();
    let mut seen = 0u64;
    let steps_per_epoch = train.len().div_ceil(tc.batch_size);
    let total_steps = (steps_per_epoch * tc.max_epochs).max(1) as f64;

    for epoch in 0..tc.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(tc.batch_size) {
            model.store.clear_grads();
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = train[i];
                let mut noise_rng = noise_root.fork(seen);
                let mut g = Graph::training(dropout_root.fork(seen));
                seen += 1;
                let patches = model.standardize(&s.patches);
                let h = model.encode_patches(&mut g, &model.store, &patches)?;
                let fused = model.fuse_var(&mut g, h, &s.schema)?;
                let inputs = if tc.input_noise > 0.0 {
                    let mut t = s.target.clone();
                    for v in t.data_mut() {
                        *v += tc.input_noise * noise_rng.normal();
                    }
                    t
                } else {
                    s.target.clone()
                };
                let pred = model.decode_teacher_forced(&mut g, &model.store, fused, &inputs)?;
                let loss = g.mse(pred, s.target.data())?;
                batch_loss += g.value(loss)[0];
                g.backward(loss)?.accumulate_into(&mut model.store);
            }
            let mean = batch_loss / batch.len() as f64;
            if !mean.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!(
                        "loss became {mean} at step {} (lr {}, batch {})",
                        history.step_losses.len(),
                        tc.lr,
                        tc.batch_size
                    ),
                });
            }
            model.store.scale_grads(1.0 / batch.len() as f64);
            if tc.clip_norm > 0.0 {
                model.store.clip_grad_norm(tc.clip_norm);
            }
            let progress = history.step_losses.len() as f64 / total_steps;
            let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            adam.config.lr = tc.lr * (tc.min_lr_ratio + (1.0 - tc.min_lr_ratio) * cosine);
            adam.step_store(&mut model.store)?;
            history.step_losses.push(mean);
            epoch_loss += batch_loss;
        }
        model.store.clear_grads();
        history.epoch_losses.push(epoch_loss / train.len() as f64);
        // An exploding last step leaves finite losses but unusable weights.
        if let Some((name, _)) = model.store.iter().find(|(_, t)| t.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                epoch,
                detail: format!("parameter {name} became non-finite (lr {})", tc.lr),
            });
        }
        let val_rmse = mean_generated_rmse(&model, &val)?;
        history.val_rmse.push(val_rmse);
        if val_rmse < history.best_val_rmse {
            history.best_val_rmse = val_rmse;
            history.best_epoch = epoch;
            best = model.store.clone();
        } else if epoch - history.best_epoch >= tc.patience {
            break;
        }
    }
    model.store = best;
    Ok((model, history))
}
