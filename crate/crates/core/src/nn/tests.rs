use super::*;
use crate::tensor::gradcheck::{self, DEFAULT_STEP};

fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn small_cfg() -> BlockConfig {
    BlockConfig::new(8, 2).unwrap().with_dropout(0.0)
}

#[test]
fn block_config_validation() {
    assert!(BlockConfig::new(64, 12).is_err());
    let c = BlockConfig::new(64, 8).unwrap();
    assert_eq!((c.head_dim(), c.d_ff), (8, 256));
    assert!(BlockConfig::new(64, 8).unwrap().with_dropout(1.0).validate().is_err());
}

#[test]
fn attention_over_single_position_has_unit_weight() {
    let mut rng = SeededRng::new(1);
    let mut store = ParamStore::new();
    let cfg = BlockConfig::new(16, 4).unwrap();
    let mha = MultiHeadAttention::new(&mut store, "a", cfg, &mut rng);
    let mut g = Graph::new();
    let x = g.input(&random(&[1, 16], &mut rng));
    let (_, weights) = mha.forward_with_weights(&mut g, &store, x, x, None).unwrap();
    for w in weights {
        assert_eq!(g.value(w), &[1.0]);
    }
}

#[test]
fn attention_weights_are_row_stochastic() {
    let mut rng = SeededRng::new(2);
    let mut store = ParamStore::new();
    let cfg = BlockConfig::new(16, 4).unwrap();
    let mha = MultiHeadAttention::new(&mut store, "a", cfg, &mut rng);
    let mut g = Graph::new();
    let q = g.input(&random(&[5, 16], &mut rng));
    let kv = g.input(&random(&[7, 16], &mut rng));
    let mask = AttentionMask::key_padding(5, 7, 4);
    for m in [None, Some(&mask)] {
        let (_, weights) = mha.forward_with_weights(&mut g, &store, q, kv, m).unwrap();
        for w in weights {
            for (r, row) in g.value(w).chunks(7).enumerate() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p >= 0.0));
                if m.is_some() {
                    assert!(row[4..].iter().all(|&p| p == 0.0), "row {r}");
                }
            }
        }
    }
}

#[test]
fn attention_rejects_bad_shapes() {
    let mut rng = SeededRng::new(3);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "a", small_cfg(), &mut rng);
    let mut g = Graph::new();
    let x = g.input(&random(&[3, 8], &mut rng));
    let wide = g.input(&random(&[3, 9], &mut rng));
    assert!(mha.forward(&mut g, &store, wide, x, None).is_err());
    let mask = AttentionMask::causal(4);
    assert!(mha.forward(&mut g, &store, x, x, Some(&mask)).is_err());
}

/// Output rows `0..=t` of `run(x)` must not change when rows after `t` change.
fn assert_causal(run: impl Fn(&Tensor) -> Tensor, len: usize, width: usize, seed: u64) {
    let mut rng = SeededRng::new(seed);
    let base = random(&[len, width], &mut rng);
    let out = run(&base);
    for t in 0..len - 1 {
        let mut perturbed = base.clone();
        for v in &mut perturbed.data_mut()[(t + 1) * width..] {
            *v += rng.uniform(-3.0, 3.0);
        }
        let out2 = run(&perturbed);
        let w = out.cols();
        let diff = out.data()[..(t + 1) * w]
            .iter()
            .zip(&out2.data()[..(t + 1) * w])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "position {t} changed by {diff}");
        let later = out.data()[(t + 1) * w..]
            .iter()
            .zip(&out2.data()[(t + 1) * w..])
            .any(|(a, b)| a != b);
        assert!(later, "perturbation had no effect at all");
    }
}

#[test]
fn causal_attention_ignores_future_positions() {
    let mut rng = SeededRng::new(4);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, "a", small_cfg(), &mut rng);
    let mask = AttentionMask::causal(6);
    assert_causal(
        |x| {
            let mut g = Graph::new();
            let v = g.input(x);
            let o = mha.forward(&mut g, &store, v, v, Some(&mask)).unwrap();
            g.tensor(o)
        },
        6,
        8,
        40,
    );
}

#[test]
fn encoder_layer_preserves_shape() {
    let mut rng = SeededRng::new(5);
    let mut store = ParamStore::new();
    let cfg = BlockConfig::new(64, 8).unwrap();
    let layer = EncoderLayer::new(&mut store, "enc", cfg, &mut rng);
    let mut g = Graph::new();
    let x = g.input(&random(&[5, 64], &mut rng));
    let y = layer.forward(&mut g, &store, x, None).unwrap();
    assert_eq!(g.shape(y), &[5, 64]);
    assert!(g.value(y).iter().all(|v| v.is_finite()));
}

#[test]
fn zeroed_projections_make_layers_identity() {
    let mut rng = SeededRng::new(6);
    let mut store = ParamStore::new();
    let cfg = BlockConfig::new(16, 4).unwrap();
    let enc = EncoderLayer::new(&mut store, "enc", cfg, &mut rng);
    let dec = DecoderLayer::new(&mut store, "dec", cfg, &mut rng);
    enc.zero_output_projections(&mut store);
    dec.zero_output_projections(&mut store);
    let x = random(&[5, 16], &mut rng);
    let mut g = Graph::new();
    let vx = g.input(&x);
    let mem = g.input(&random(&[1, 16], &mut rng));
    let e = enc.forward(&mut g, &store, vx, None).unwrap();
    let d = dec.forward(&mut g, &store, vx, mem, Some(&AttentionMask::causal(5))).unwrap();
    assert_eq!(g.value(e), x.data());
    assert_eq!(g.value(d), x.data());
}

#[test]
fn decoder_layer_is_causal() {
    let mut rng = SeededRng::new(7);
    let mut store = ParamStore::new();
    let dec = DecoderLayer::new(&mut store, "dec", small_cfg(), &mut rng);
    let memory = random(&[1, 8], &mut rng);
    let mask = AttentionMask::causal(7);
    assert_causal(
        |x| {
            let mut g = Graph::new();
            let v = g.input(x);
            let m = g.input(&memory);
            let o = dec.forward(&mut g, &store, v, m, Some(&mask)).unwrap();
            g.tensor(o)
        },
        7,
        8,
        41,
    );
}

#[test]
fn positional_encoding_values() {
    let pe = sinusoidal_positional_encoding(50, 16);
    for c in 0..16 {
        assert_eq!(pe.at(&[0, c]), if c % 2 == 0 { 0.0 } else { 1.0 });
    }
    assert_eq!(pe.at(&[1, 0]), 1f64.sin());
    // Column 3 pairs with column 2: angle = pos / 10000^(2/16).
    let angle = 7.0 / 10000f64.powf(2.0 / 16.0);
    assert!((pe.at(&[7, 3]) - angle.cos()).abs() < 1e-15);
    assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert_eq!(pe, sinusoidal_positional_encoding(50, 16));
}

fn tokens(ids: &[usize]) -> TokenSequence {
    TokenSequence {
        token_ids: ids.to_vec(),
        segment_ids: vec![0; ids.len()],
        position_ids: (0..ids.len()).collect(),
        attention_mask: vec![true; ids.len()],
    }
}

#[test]
fn summed_embeddings() {
    let mut rng = SeededRng::new(8);
    let mut store = ParamStore::new();
    let tok = EmbeddingTable::new(&mut store, "tok", 10, 4, &mut rng);
    let seg = EmbeddingTable::new(&mut store, "seg", 2, 4, &mut rng);
    let pos = EmbeddingTable::new(&mut store, "pos", 6, 4, &mut rng);
    let seq = tokens(&[3, 9, 0]);

    let mut g = Graph::new();
    let out = sum_input_embeddings(&mut g, &store, &seq, [&tok, &seg, &pos]).unwrap();
    let out = g.tensor(out);
    for r in 0..3 {
        for c in 0..4 {
            let want = store.get(tok.weight).at(&[seq.token_ids[r], c])
                + store.get(seg.weight).at(&[0, c])
                + store.get(pos.weight).at(&[r, c]);
            assert!((out.at(&[r, c]) - want).abs() < 1e-12);
        }
    }

    let mut zeroed = store.clone();
    for t in zeroed.tensors_mut() {
        t.data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let z = sum_input_embeddings(&mut g, &zeroed, &seq, [&tok, &seg, &pos]).unwrap();
    assert!(g.value(z).iter().all(|&v| v == 0.0));

    for (table, col) in [(&tok, 0), (&seg, 1), (&pos, 2)] {
        let w = zeroed.get_mut(table.weight);
        w.data_mut()[col] = 1.0;
    }
    let mut g = Graph::new();
    let one = sum_input_embeddings(&mut g, &zeroed, &tokens(&[0]), [&tok, &seg, &pos]).unwrap();
    assert_eq!(g.value(one), &[1.0, 1.0, 1.0, 0.0]);

    let mut g = Graph::new();
    assert!(sum_input_embeddings(&mut g, &store, &tokens(&[10]), [&tok, &seg, &pos]).is_err());
}

#[test]
fn block_gradients_match_finite_differences() {
    let mut rng = SeededRng::new(9);
    let mut store = ParamStore::new();
    let cfg = small_cfg();
    let enc = EncoderLayer::new(&mut store, "enc", cfg, &mut rng);
    let dec = DecoderLayer::new(&mut store, "dec", cfg, &mut rng);
    let x = random(&[4, 8], &mut rng);
    let mem = random(&[2, 8], &mut rng);
    let target: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).cos()).collect();
    let mask = AttentionMask::causal(4);
    let report = gradcheck::check_params(&store, DEFAULT_STEP, 6, |g, s| -> crate::Result<Var> {
        let vx = g.input(&x);
        let vm = g.input(&mem);
        let e = enc.forward(g, s, vm, None)?;
        let d = dec.forward(g, s, vx, e, Some(&mask))?;
        Ok(g.mse(d, &target)?)
    })
    .unwrap();
    assert!(report.checked > 100);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn checkpoint_roundtrip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(10);
    let mut store = ParamStore::new();
    let _ = EncoderLayer::new(&mut store, "enc", small_cfg(), &mut rng);
    let cfg = serde_json::to_value(small_cfg()).unwrap();
    checkpoint::save(dir.path(), "test", cfg.clone(), serde_json::Value::Null, &store).unwrap();

    let (manifest, tensors) = checkpoint::load(dir.path(), "test").unwrap();
    assert_eq!(manifest.config, cfg);
    let mut fresh = ParamStore::new();
    let _ = EncoderLayer::new(&mut fresh, "enc", small_cfg(), &mut SeededRng::new(99));
    checkpoint::restore(&mut fresh, &manifest, &tensors).unwrap();
    for (a, b) in fresh.tensors().iter().zip(store.tensors()) {
        assert_eq!(a.data(), b.data());
    }

    assert!(checkpoint::load(dir.path(), "other").is_err());
    let mut wider = ParamStore::new();
    let _ = EncoderLayer::new(&mut wider, "enc", BlockConfig::new(16, 2).unwrap(), &mut rng);
    assert!(checkpoint::restore(&mut wider, &manifest, &tensors).is_err());
}

#[test]
fn row_restricted_forward_matches_full_output() {
    let mut rng = SeededRng::new(11);
    let mut store = ParamStore::new();
    let cfg = BlockConfig::new(16, 4).unwrap();
    let enc = EncoderLayer::new(&mut store, "enc", cfg, &mut rng);
    let dec = DecoderLayer::new(&mut store, "dec", cfg, &mut rng);
    let x = random(&[6, 16], &mut rng);
    let mem = random(&[1, 16], &mut rng);
    let mut g = Graph::new();
    let vx = g.input(&x);
    let vm = g.input(&mem);
    let full = enc.forward(&mut g, &store, vx, None).unwrap();
    let cls = enc.forward_rows(&mut g, &store, vx, 0..1, None).unwrap();
    assert_eq!(&g.value(full)[..16], g.value(cls));

    let causal = AttentionMask::causal(6);
    let full = dec.forward(&mut g, &store, vx, vm, Some(&causal)).unwrap();
    let last = dec.forward_rows(&mut g, &store, vx, vm, 5..6, None).unwrap();
    let diff = g.value(full)[5 * 16..]
        .iter()
        .zip(g.value(last))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12);
}
