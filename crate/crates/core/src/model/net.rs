use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::audio::{patchify, MelSpectrogram, PATCH, PATCH_STRIDE};
use crate::nn::{
    checkpoint, sinusoidal_positional_encoding, AttentionMask, BlockConfig, DecoderLayer,
    EncoderLayer, LayerNorm, Linear,
};
use crate::pose::{FRAMES, POSE_DIM};
use crate::schema::NUM_SCHEMAS;
use crate::tensor::{Graph, ParamId, ParamStore, SeededRng, Tensor, Var};
use crate::{Error, Result};

pub const CHECKPOINT_KIND: &str = "meta4";

/// Width of an audio vector concatenated with a schema vector, for the default width.
pub const FUSED_WIDTH: usize = 64 + NUM_SCHEMAS;

/// How a segment's image schema is turned into the 14-float vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaMode {
    /// The classifier's softmax distribution.
    #[default]
    Distribution,
    /// One-hot of the classifier's argmax.
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Meta4Arch {
    /// Shared width of the audio encoder and the decoder.
    pub d_model: usize,
    pub audio_layers: usize,
    pub audio_heads: usize,
    pub decoder_heads: usize,
    pub dropout: f64,
    pub schema_mode: SchemaMode,
}

impl Default for Meta4Arch {
    fn default() -> Self {
        Self {
            d_model: 64,
            audio_layers: 4,
            audio_heads: 8,
            decoder_heads: 4,
            dropout: 0.1,
            schema_mode: SchemaMode::Distribution,
        }
    }
}

impl Meta4Arch {
    pub fn audio_block(&self) -> Result<BlockConfig> {
        if self.audio_layers == 0 {
            return Err(Error::Config("audio encoder needs at least one layer".into()));
        }
        let b = BlockConfig::new(self.d_model, self.audio_heads)?.with_dropout(self.dropout);
        b.validate()?;
        Ok(b)
    }

    pub fn decoder_block(&self) -> Result<BlockConfig> {
        let b = BlockConfig::new(self.d_model, self.decoder_heads)?.with_dropout(self.dropout);
        b.validate()?;
        Ok(b)
    }

    pub fn fused_width(&self) -> usize {
        self.d_model + NUM_SCHEMAS
    }
}

/// Concatenates an audio vector and a schema vector, audio first.
pub fn fuse(h_audio: &[f64], schema: &[f64], d_model: usize) -> Result<Vec<f64>> {
    if h_audio.len() != d_model || schema.len() != NUM_SCHEMAS {
        return Err(Error::Invalid(format!(
            "fusion expects widths {d_model} and {NUM_SCHEMAS}, got {} and {}",
            h_audio.len(),
            schema.len()
        )));
    }
    Ok(h_audio.iter().chain(schema).copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Meta4Model {
    pub arch: Meta4Arch,
    pub store: ParamStore,
    /// Affine standardization applied to raw log-mel patch values.
    pub patch_mean: f64,
    pub patch_std: f64,
    /// Set once the weights come from training or a checkpoint.
    pub trained: bool,
    patch_proj: Linear,
    cls: ParamId,
    encoder: Vec<EncoderLayer>,
    encoder_norm: LayerNorm,
    memory_proj: Linear,
    pose_in: Linear,
    decoder: DecoderLayer,
    decoder_norm: LayerNorm,
    pose_out: Linear,
}

impl Meta4Model {
    pub fn new(arch: Meta4Arch, seed: u64) -> Result<Self> {
        let audio = arch.audio_block()?;
        let dec = arch.decoder_block()?;
        let d = arch.d_model;
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let patch_proj = Linear::new(&mut store, "audio.patch_proj", PATCH * PATCH, d, &mut rng);
        let cls_init = (0..d).map(|_| rng.uniform(-0.1, 0.1)).collect();
        let cls = store.add("audio.cls", Tensor::new(vec![1, d], cls_init)?);
        let encoder = (0..arch.audio_layers)
            .map(|i| EncoderLayer::new(&mut store, &format!("audio.layer{i}"), audio, &mut rng))
            .collect();
        let encoder_norm = LayerNorm::new(&mut store, "audio.final_norm", d);
        let memory_proj = Linear::new(&mut store, "decoder.memory_proj", arch.fused_width(), d, &mut rng);
        let pose_in = Linear::new(&mut store, "decoder.pose_in", POSE_DIM, d, &mut rng);
        let decoder = DecoderLayer::new(&mut store, "decoder.layer0", dec, &mut rng);
        let decoder_norm = LayerNorm::new(&mut store, "decoder.final_norm", d);
        let pose_out = Linear::new(&mut store, "decoder.pose_out", d, POSE_DIM, &mut rng);
        Ok(Self {
            arch,
            store,
            patch_mean: 0.0,
            patch_std: 1.0,
            trained: false,
            patch_proj,
            cls,
            encoder,
            encoder_norm,
            memory_proj,
            pose_in,
            decoder,
            decoder_norm,
            pose_out,
        })
    }

    /// Parameter id of the patch projection weight.
    pub fn patch_projection_weight(&self) -> ParamId {
        self.patch_proj.weight
    }

    /// Raw patches of a spectrogram, `count x 256`.
    pub fn patches(mel: &MelSpectrogram) -> Result<Tensor> {
        Ok(patchify(mel, PATCH, PATCH_STRIDE)?.data)
    }

    /// Standardized copy of raw patches.
    pub fn standardize(&self, patches: &Tensor) -> Tensor {
        let mut t = patches.clone();
        for v in t.data_mut() {
            *v = (*v - self.patch_mean) / self.patch_std;
        }
        t
    }

    /// `1 x d_model` [CLS] output for standardized patches.
    pub fn encode_patches(&self, g: &mut Graph, store: &ParamStore, patches: &Tensor) -> Result<Var> {
        if patches.rank() != 2 || patches.cols() != PATCH * PATCH || patches.rows() == 0 {
            return Err(Error::Invalid(format!(
                "patches must be n x {}, got {:?}",
                PATCH * PATCH,
                patches.shape()
            )));
        }
        let p = g.input(patches);
        let tokens = self.patch_proj.forward(g, store, p)?;
        let cls = g.param(store, self.cls);
        let x = g.concat_rows(&[cls, tokens])?;
        let pe = sinusoidal_positional_encoding(patches.rows() + 1, self.arch.d_model);
        let pe = g.input(&pe);
        let mut x = g.add(x, pe)?;
        let last = self.encoder.len() - 1;
        for (i, layer) in self.encoder.iter().enumerate() {
            // Only the [CLS] row of the final layer is ever read.
            x = if i == last {
                layer.forward_rows(g, store, x, 0..1, None)?
            } else {
                layer.forward(g, store, x, None)?
            };
        }
        self.encoder_norm.forward(g, store, x)
    }

    /// The `d_model`-float audio representation of a spectrogram.
    pub fn encode_audio(&self, mel: &MelSpectrogram) -> Result<Vec<f64>> {
        let patches = self.standardize(&Self::patches(mel)?);
        let mut g = Graph::new();
        let h = self.encode_patches(&mut g, &self.store, &patches)?;
        Ok(g.value(h).to_vec())
    }

    /// `1 x (d_model + 14)` fused vector inside a graph.
    pub fn fuse_var(&self, g: &mut Graph, h_audio: Var, schema: &[f64]) -> Result<Var> {
        if schema.len() != NUM_SCHEMAS {
            return Err(Error::Invalid(format!("schema vector has width {}", schema.len())));
        }
        let s = g.constant(vec![1, NUM_SCHEMAS], schema.to_vec())?;
        Ok(g.concat_cols(&[h_audio, s])?)
    }

    fn check_fused(&self, g: &Graph, h_fused: Var) -> Result<()> {
        if g.shape(h_fused) != [1, self.arch.fused_width()] {
            return Err(Error::Invalid(format!(
                "fused vector must be 1 x {}, got {:?}",
                self.arch.fused_width(),
                g.shape(h_fused)
            )));
        }
        Ok(())
    }

    /// Decoder over explicit input frames (`len x 22`, row 0 the start pose),
    /// emitting output rows `rows` only.
    fn decode_rows(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h_fused: Var,
        inputs: &Tensor,
        rows: std::ops::Range<usize>,
    ) -> Result<Var> {
        self.check_fused(g, h_fused)?;
        let len = inputs.rows();
        let memory = self.memory_proj.forward(g, store, h_fused)?;
        let x = g.input(inputs);
        let x = self.pose_in.forward(g, store, x)?;
        let pe = g.input(&sinusoidal_positional_encoding(len, self.arch.d_model));
        let x = g.add(x, pe)?;
        let full = rows.start == 0 && rows.end == len;
        let mask = if full { Some(AttentionMask::causal(len)) } else { None };
        if !full && rows.end != len {
            return Err(Error::Invalid("partial decoding is only defined for trailing rows".into()));
        }
        let y = self.decoder.forward_rows(g, store, x, memory, rows, mask.as_ref())?;
        let y = self.decoder_norm.forward(g, store, y)?;
        self.pose_out.forward(g, store, y)
    }

    /// Teacher-forced `64 x 22` prediction: the decoder sees the start pose
    /// followed by ground-truth frames `0..63`.
    pub fn decode_teacher_forced(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h_fused: Var,
        gt: &Tensor,
    ) -> Result<Var> {
        if gt.shape() != [FRAMES, POSE_DIM] || !gt.all_finite() {
            return Err(Error::Invalid(format!(
                "ground truth must be a finite {FRAMES} x {POSE_DIM} sequence, got {:?}",
                gt.shape()
            )));
        }
        let mut inputs = vec![0.0; POSE_DIM];
        inputs.extend_from_slice(&gt.data()[..(FRAMES - 1) * POSE_DIM]);
        let inputs = Tensor::new(vec![FRAMES, POSE_DIM], inputs)?;
        self.decode_rows(g, store, h_fused, &inputs, 0..FRAMES)
    }

    /// Autoregressive 64-frame rollout from the all-zero start pose, feeding
    /// each prediction back in. Works on untrained weights; see [`Self::generate`].
    pub fn rollout(&self, h_fused: &[f64]) -> Result<Tensor> {
        if h_fused.len() != self.arch.fused_width() {
            return Err(Error::Invalid(format!(
                "fused vector has width {}, expected {}",
                h_fused.len(),
                self.arch.fused_width()
            )));
        }
        let fused = Tensor::new(vec![1, h_fused.len()], h_fused.to_vec())?;
        let mut frames = vec![0.0; POSE_DIM];
        for t in 0..FRAMES {
            let mut g = Graph::new();
            let h = g.input(&fused);
            let inputs = Tensor::new(vec![t + 1, POSE_DIM], frames.clone())?;
            let y = self.decode_rows(&mut g, &self.store, h, &inputs, t..t + 1)?;
            let out = g.value(y);
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite prediction at frame {t}")));
            }
            frames.extend_from_slice(out);
        }
        Ok(Tensor::new(vec![FRAMES, POSE_DIM], frames[POSE_DIM..].to_vec())?)
    }

    /// Deterministic rollout; refuses models that were never trained or loaded.
    pub fn generate(&self, h_fused: &[f64]) -> Result<Tensor> {
        if !self.trained {
            return Err(Error::Invalid("model is untrained; train or load a checkpoint first".into()));
        }
        self.rollout(h_fused)
    }

    /// Encode, fuse and roll out for standardized patches.
    pub fn predict_patches(&self, patches: &Tensor, schema: &[f64]) -> Result<Tensor> {
        let mut g = Graph::new();
        let h = self.encode_patches(&mut g, &self.store, patches)?;
        let fused = fuse(g.value(h), schema, self.arch.d_model)?;
        self.generate(&fused)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::save(
            dir,
            CHECKPOINT_KIND,
            serde_json::to_value(self.arch)?,
            json!({
                "patch_mean": self.patch_mean,
                "patch_std": self.patch_std,
                "fused_width": self.arch.fused_width(),
            }),
            &self.store,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (manifest, tensors) = checkpoint::load(dir, CHECKPOINT_KIND)?;
        let arch: Meta4Arch = serde_json::from_value(manifest.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad meta4 config: {e}")))?;
        let width = manifest.extra["fused_width"].as_u64();
        if width != Some(arch.fused_width() as u64) {
            return Err(Error::Checkpoint(format!(
                "fused width {width:?} does not match d_model {} + {NUM_SCHEMAS}",
                arch.d_model
            )));
        }
        let mut model = Self::new(arch, 0)?;
        checkpoint::restore(&mut model.store, &manifest, &tensors)?;
        let stat = |key: &str| {
            manifest.extra[key]
                .as_f64()
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint lacks {key}")))
        };
        model.patch_mean = stat("patch_mean")?;
        model.patch_std = stat("patch_std")?;
        if !(model.patch_std > 0.0) {
            return Err(Error::Checkpoint("patch_std must be positive".into()));
        }
        model.trained = true;
        Ok(model)
    }
}
