use super::*;
use crate::audio::compute_mel;
use crate::data::synth::{synth_voice, synth_gesture_dataset};
use crate::eval;
use crate::pose::{FRAMES, POSE_DIM};
use crate::schema::{ImageSchemaLabel as L, NUM_SCHEMAS};
use crate::tensor::gradcheck::check_params;
use crate::tensor::{Graph, SeededRng, Tensor};

fn small_arch() -> Meta4Arch {
    Meta4Arch {
        audio_layers: 1,
        audio_heads: 4,
        ..Meta4Arch::default()
    }
}

fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut SeededRng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

fn random_sample(id: usize, patches: usize, rng: &mut SeededRng) -> PreparedSample {
    let label = L::ALL[rng.below(NUM_SCHEMAS)];
    PreparedSample {
        id: format!("s{id}"),
        speaker_id: "spk0".into(),
        patches: random_tensor(patches, 256, 1.0, rng),
        schema: label.one_hot(),
        label,
        target: random_tensor(FRAMES, POSE_DIM, 0.5, rng),
    }
}

fn fused_for(model: &Meta4Model, patches: &Tensor, schema: &[f64]) -> Vec<f64> {
    let mut g = Graph::new();
    let h = model.encode_patches(&mut g, &model.store, patches).unwrap();
    fuse(g.value(h), schema, model.arch.d_model).unwrap()
}

#[test]
fn audio_encoding_has_model_width_and_separates_inputs() {
    let model = Meta4Model::new(small_arch(), 1).unwrap();
    let mut rng = SeededRng::new(4);
    let mut codes = Vec::new();
    for k in 0..4 {
        let wave = synth_voice(200.0 + 150.0 * k as f64, 0.05 + 0.02 * k as f64, &mut rng);
        let h = model.encode_audio(&compute_mel(&wave).unwrap()).unwrap();
        assert_eq!(h.len(), 64);
        assert!(h.iter().all(|v| v.is_finite()));
        codes.push(h);
    }
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            let d = codes[i].iter().zip(&codes[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d > 1e-6, "inputs {i} and {j} collide");
        }
    }
}

#[test]
fn audio_encoder_gradients_match_finite_differences() {
    let model = Meta4Model::new(small_arch(), 2).unwrap();
    let mut rng = SeededRng::new(9);
    let patches = random_tensor(5, 256, 1.0, &mut rng);
    let weights: Vec<f64> = (0..64).map(|_| rng.uniform(-1.0, 1.0)).collect();
    // Some entries have gradients near 1e-6; at smaller steps the central
    // difference is dominated by rounding in the 505-token forward pass.
    let report = check_params(&model.store, 1e-4, 6, |g, store| {
        let h = model.encode_patches(g, store, &patches)?;
        let w = g.constant(vec![1, 64], weights.clone())?;
        let prod = g.mul(h, w)?;
        Ok::<_, crate::Error>(g.sum(prod))
    })
    .unwrap();
    assert!(report.checked > 0);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn fusion_concatenates_audio_first() {
    assert_eq!(fuse(&[0.0; 64], &[0.0; 14], 64).unwrap(), vec![0.0; 78]);
    let audio: Vec<f64> = (0..64).map(|i| i as f64).collect();
    let schema = L::Support.one_hot();
    let f = fuse(&audio, &schema, 64).unwrap();
    assert_eq!(f.len(), FUSED_WIDTH);
    assert_eq!(&f[..64], audio.as_slice());
    assert_eq!(&f[64..], schema.as_slice());
    assert!(fuse(&audio[..63], &schema, 64).is_err());
    assert!(fuse(&audio, &schema[..13], 64).is_err());
}

#[test]
fn teacher_forced_decoding_is_causal() {
    let model = Meta4Model::new(small_arch(), 3).unwrap();
    let mut rng = SeededRng::new(10);
    let fused = Tensor::new(vec![1, 78], (0..78).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
    let gt = random_tensor(FRAMES, POSE_DIM, 0.5, &mut rng);
    let run = |gt: &Tensor| {
        let mut g = Graph::new();
        let h = g.input(&fused);
        let y = model.decode_teacher_forced(&mut g, &model.store, h, gt).unwrap();
        assert_eq!(g.shape(y), [FRAMES, POSE_DIM]);
        g.tensor(y)
    };
    let base = run(&gt);
    for t in [0, 1, 17, 40, 63] {
        let mut perturbed = gt.clone();
        for v in &mut perturbed.data_mut()[t * POSE_DIM..] {
            *v += rng.uniform(-3.0, 3.0);
        }
        let out = run(&perturbed);
        for row in 0..=t {
            let d = base.row(row).iter().zip(out.row(row)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d < 1e-12, "frame {row} moved by {d:e} after perturbing frames >= {t}");
        }
        if t < 63 {
            let later = base.row(t + 1).iter().zip(out.row(t + 1)).any(|(a, b)| a != b);
            assert!(later, "frame {} should see ground-truth frame {t}", t + 1);
        }
    }
    assert!({
        let mut g = Graph::new();
        let h = g.input(&fused);
        model.decode_teacher_forced(&mut g, &model.store, h, &Tensor::zeros(&[63, POSE_DIM])).is_err()
    });
}

#[test]
fn rollout_matches_teacher_forcing_on_its_own_output() {
    let model = Meta4Model::new(small_arch(), 5).unwrap();
    let mut rng = SeededRng::new(11);
    let fused: Vec<f64> = (0..78).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let rolled = model.rollout(&fused).unwrap();
    assert_eq!(rolled.shape(), [FRAMES, POSE_DIM]);
    assert_eq!(rolled, model.rollout(&fused).unwrap());
    let mut g = Graph::new();
    let h = g.input(&Tensor::new(vec![1, 78], fused.clone()).unwrap());
    let tf = model.decode_teacher_forced(&mut g, &model.store, h, &rolled).unwrap();
    assert!(g.tensor(tf).max_abs_diff(&rolled) < 1e-12);
    assert!(model.generate(&fused).is_err(), "untrained model must refuse to generate");
    assert!(model.rollout(&fused[..70]).is_err());
}

#[test]
fn pose_loss_reaches_the_patch_projection() {
    let model = Meta4Model::new(small_arch(), 6).unwrap();
    let mut rng = SeededRng::new(12);
    let mut store = model.store.clone();
    for i in 0..3 {
        let s = random_sample(i, 8, &mut rng);
        let mut g = Graph::new();
        let h = model.encode_patches(&mut g, &store, &s.patches).unwrap();
        let f = model.fuse_var(&mut g, h, &s.schema).unwrap();
        let y = model.decode_teacher_forced(&mut g, &store, f, &s.target).unwrap();
        let loss = g.mse(y, s.target.data()).unwrap();
        g.backward(loss).unwrap().accumulate_into(&mut store);
    }
    let grad = store.get(model.patch_projection_weight()).grad().unwrap();
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm > 1e-8 && norm.is_finite(), "norm {norm}");
}

fn memorize_config(max_epochs: usize) -> Meta4Config {
    Meta4Config {
        model: Meta4Arch {
            dropout: 0.0,
            ..small_arch()
        },
        train: Meta4TrainConfig {
            lr: 3e-3,
            batch_size: 1,
            max_epochs,
            patience: max_epochs,
            clip_norm: 1.0,
            val_fraction: 0.1,
            input_noise: 0.0,
            min_lr_ratio: 1.0,
        },
    }
}

#[test]
fn single_sample_is_memorized_within_500_steps() {
    let mut rng = SeededRng::new(13);
    let data = vec![random_sample(0, 6, &mut rng)];
    let (model, h) = train_meta4_prepared(&data, &memorize_config(500), 1).unwrap();
    let first = h.step_losses.iter().position(|l| *l < 1e-3);
    assert!(first.is_some_and(|s| s < 500), "final loss {:?}", h.step_losses.last());
    // The first ten steps already make progress.
    assert!(h.step_losses[..10].iter().all(|l| l.is_finite()));
    assert!(h.step_losses[9] < h.step_losses[0]);
    let pred = model.generate(&fused_for(&model, &model.standardize(&data[0].patches), &data[0].schema)).unwrap();
    assert!(eval::rmse(pred.data(), data[0].target.data()).unwrap() < 1e-1);
}

#[test]
fn seeded_training_is_bit_reproducible() {
    let mut rng = SeededRng::new(14);
    let data: Vec<_> = (0..12).map(|i| random_sample(i, 6, &mut rng)).collect();
    let mut cfg = memorize_config(5);
    cfg.model.dropout = 0.1;
    cfg.train.batch_size = 2;
    cfg.train.input_noise = 0.1;
    cfg.train.min_lr_ratio = 0.05;
    let (m1, h1) = train_meta4_prepared(&data, &cfg, 21).unwrap();
    let (m2, h2) = train_meta4_prepared(&data, &cfg, 21).unwrap();
    assert!(h1.step_losses.len() >= 10);
    let a: Vec<u64> = h1.step_losses[..10].iter().map(|l| l.to_bits()).collect();
    let b: Vec<u64> = h2.step_losses[..10].iter().map(|l| l.to_bits()).collect();
    assert_eq!(a, b);
    assert_eq!(m1.store, m2.store);
    let (_, h3) = train_meta4_prepared(&data, &cfg, 22).unwrap();
    assert_ne!(h1.step_losses[..10], h3.step_losses[..10]);
}

#[test]
fn reported_validation_rmse_matches_the_metric_suite() {
    let mut rng = SeededRng::new(15);
    let data: Vec<_> = (0..10).map(|i| random_sample(i, 6, &mut rng)).collect();
    let mut cfg = memorize_config(4);
    cfg.train.val_fraction = 0.3;
    let (model, h) = train_meta4_prepared(&data, &cfg, 3).unwrap();
    assert_eq!(h.val_ids.len(), 3);
    let mut total = 0.0;
    for id in &h.val_ids {
        let s = data.iter().find(|s| &s.id == id).unwrap();
        let pred = model.predict_patches(&model.standardize(&s.patches), &s.schema).unwrap();
        total += eval::rmse(pred.data(), s.target.data()).unwrap();
    }
    assert_eq!(total / 3.0, h.val_rmse[h.best_epoch]);
    assert_eq!(h.best_val_rmse, h.val_rmse[h.best_epoch]);
}

#[test]
fn infinite_learning_rate_reports_divergence() {
    let mut rng = SeededRng::new(16);
    let data: Vec<_> = (0..4).map(|i| random_sample(i, 4, &mut rng)).collect();
    let mut cfg = memorize_config(3);
    cfg.train.lr = f64::INFINITY;
    cfg.train.clip_norm = 0.0;
    match train_meta4_prepared(&data, &cfg, 0) {
        Err(crate::Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|(_, h)| h.step_losses)),
    }
}

#[test]
fn checkpoints_round_trip_and_reject_wrong_widths() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(17);
    let data: Vec<_> = (0..3).map(|i| random_sample(i, 4, &mut rng)).collect();
    let (model, _) = train_meta4_prepared(&data, &memorize_config(2), 4).unwrap();
    let path = dir.path().join("ckpt");
    model.save(&path).unwrap();
    let loaded = Meta4Model::load(&path).unwrap();
    assert_eq!(loaded.store, model.store);
    assert_eq!((loaded.patch_mean, loaded.patch_std), (model.patch_mean, model.patch_std));
    let fused = fused_for(&model, &model.standardize(&data[0].patches), &data[0].schema);
    assert_eq!(loaded.generate(&fused).unwrap(), model.generate(&fused).unwrap());

    let manifest = path.join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["config"]["d_model"] = serde_json::json!(32);
    json["extra"]["fused_width"] = serde_json::json!(46);
    std::fs::write(&manifest, json.to_string()).unwrap();
    assert!(Meta4Model::load(&path).is_err());
    json["config"]["d_model"] = serde_json::json!(64);
    std::fs::write(&manifest, json.to_string()).unwrap();
    assert!(Meta4Model::load(&path).is_err(), "inconsistent fused width must be rejected");
}

#[test]
fn schema_vectors_follow_override_and_mode() {
    let mut samples = synth_gesture_dataset(1, 1, 3).unwrap();
    assert!(schema_vector(&samples[0], None, SchemaMode::Distribution).is_err());
    samples[0].schema = Some(L::Link);
    let (v, l) = schema_vector(&samples[0], None, SchemaMode::Distribution).unwrap();
    assert_eq!((v, l), (L::Link.one_hot(), L::Link));
    let prepared = prepare_samples(&samples, None, SchemaMode::OneHot).unwrap();
    assert_eq!(prepared[0].patches.shape(), [504, 256]);
    assert_eq!(prepared[0].target, samples[0].poses.data);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = Meta4Config::default();
    assert!(cfg.validate().is_ok());
    cfg.model.audio_heads = 5;
    assert!(cfg.validate().is_err());
    let mut cfg = Meta4Config::default();
    cfg.train.val_fraction = 1.0;
    assert!(cfg.validate().is_err());
    let toml_like: Meta4Config = serde_json::from_str(r#"{"model": {"schema_mode": "one_hot"}}"#).unwrap();
    assert_eq!(toml_like.model.schema_mode, SchemaMode::OneHot);
    assert!(serde_json::from_str::<Meta4Config>(r#"{"model": {"layers": 2}}"#).is_err());
}

