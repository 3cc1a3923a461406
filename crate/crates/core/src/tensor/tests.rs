use super::gradcheck::{self, DEFAULT_STEP};
use super::*;
use proptest::prelude::*;

fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.at(&[i, p]) * b.at(&[p, j]);
            }
            out[i * n + j] = s;
        }
    }
    out
}

#[test]
fn matmul_identity() {
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(matmul(&Tensor::identity(2), &x).unwrap(), x);
}

#[test]
fn matmul_two_by_two() {
    let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    let b = Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
    let want = naive_matmul(&a, &b);
    assert_eq!(want, vec![19.0, 22.0, 43.0, 50.0]);
    assert_eq!(matmul(&a, &b).unwrap().data(), want.as_slice());
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let a = Tensor::zeros(&[2, 3]);
    let err = matmul(&a, &a).unwrap_err().to_string();
    assert!(err.contains("[2, 3]"), "{err}");
}

#[test]
fn matmul_matches_triple_loop_on_random_8x8() {
    let mut rng = SeededRng::new(11);
    for _ in 0..20 {
        let a = random(&[8, 8], &mut rng);
        let b = random(&[8, 8], &mut rng);
        let got = matmul(&a, &b).unwrap();
        for (x, y) in got.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn softmax_examples() {
    let s = softmax(&Tensor::zeros(&[4]), 0).unwrap();
    assert!(s.data().iter().all(|v| (v - 0.25).abs() < 1e-15));

    let s = softmax(&Tensor::vector(vec![1000.0, 1000.0]).unwrap(), 0).unwrap();
    assert_eq!(s.data(), &[0.5, 0.5]);

    // Direct evaluation without max-subtraction is safe for small inputs.
    let raw: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
    let z: f64 = raw.iter().sum();
    let s = softmax(&Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap(), 0).unwrap();
    for (got, e) in s.data().iter().zip(&raw) {
        assert!((got - e / z).abs() < 1e-15);
    }
    assert!((s.data()[2] - 0.665_240_955_774_821_8).abs() < 1e-15);
}

#[test]
fn softmax_over_leading_axis() {
    let x = Tensor::from_rows(&[vec![0.0, 5.0], vec![0.0, -5.0]]).unwrap();
    let s = softmax(&x, 0).unwrap();
    assert!((s.at(&[0, 0]) - 0.5).abs() < 1e-15);
    assert!((s.at(&[0, 1]) + s.at(&[1, 1]) - 1.0).abs() < 1e-15);
    assert!(matches!(
        softmax(&x, 2),
        Err(TensorError::InvalidAxis { axis: 2, rank: 2 })
    ));
}

#[test]
fn layer_norm_examples() {
    let ones = Tensor::full(&[3], 1.0);
    let zeros = Tensor::zeros(&[3]);

    let c = layer_norm(&Tensor::full(&[1, 3], 7.0), &ones, &zeros).unwrap();
    assert!(c.data().iter().all(|&v| v == 0.0));

    let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
    let y = layer_norm(&x, &ones, &zeros).unwrap();
    let mean: f64 = y.data().iter().sum::<f64>() / 3.0;
    let var: f64 = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
    // Oracle: population variance 2/3, epsilon inside the root.
    let raw_var = 2.0 / 3.0;
    assert!(mean.abs() < 1e-15);
    assert!((var - raw_var / (raw_var + kernels::LAYER_NORM_EPS)).abs() < 1e-12);
    assert!((var - 1.0).abs() < 2e-5);

    let y = layer_norm(&x, &zeros, &Tensor::full(&[3], 5.0)).unwrap();
    assert!(y.data().iter().all(|&v| v == 5.0));

    assert!(layer_norm(&x, &Tensor::zeros(&[2]), &zeros).is_err());
}

#[test]
fn backward_of_sum_of_squares() {
    let x = Tensor::vector(vec![1.0, 2.0]).unwrap().with_requires_grad(true);
    let mut g = Graph::new();
    let v = g.input(&x);
    let sq = g.mul(v, v).unwrap();
    let loss = g.sum(sq);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(v).unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let v = g.input(&Tensor::zeros(&[2]).with_requires_grad(true));
    assert!(matches!(g.backward(v), Err(TensorError::NonScalarLoss(_))));
}

#[test]
fn unreachable_and_constant_leaves_have_no_grad() {
    let mut g = Graph::new();
    let a = g.input(&Tensor::scalar(2.0).with_requires_grad(true));
    let off_graph = g.input(&Tensor::scalar(3.0).with_requires_grad(true));
    let c = g.input(&Tensor::scalar(4.0));
    let prod = g.mul(a, c).unwrap();
    let grads = g.backward(prod).unwrap();
    assert_eq!(grads.get(a).unwrap(), &[4.0]);
    assert!(grads.get(off_graph).is_none());
    assert!(grads.get(c).is_none());
}

#[test]
fn param_gradients_land_in_store() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::vector(vec![1.0, -1.0]).unwrap());
    let frozen = store.add("frozen", Tensor::vector(vec![2.0, 2.0]).unwrap());
    store.get_mut(frozen).set_requires_grad(false);
    let mut g = Graph::new();
    let vw = g.param(&store, w);
    assert_eq!(g.param(&store, w), vw);
    let vf = g.param(&store, frozen);
    let p = g.mul(vw, vf).unwrap();
    let loss = g.sum(p);
    g.backward(loss).unwrap().accumulate_into(&mut store);
    assert_eq!(store.get(w).grad().unwrap(), &[2.0, 2.0]);
    assert!(store.get(frozen).grad().is_none());
}

fn assert_gradcheck<F>(name: &str, inputs: &[Tensor], build: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let r = gradcheck::check(inputs, DEFAULT_STEP, build).unwrap();
    assert!(
        r.max_relative_error < 1e-4,
        "{name}: relative error {} (abs {})",
        r.max_relative_error,
        r.max_abs_error
    );
}

/// Weighted sum with fixed pseudo-random weights so every output element matters.
fn weighted(g: &mut Graph, v: Var) -> Result<Var, TensorError> {
    let n = g.value(v).len();
    let shape = g.shape(v).to_vec();
    let w = g.constant(shape, (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect())?;
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

#[test]
fn gradcheck_matmul_chain() {
    let mut rng = SeededRng::new(3);
    let ins = [random(&[3, 4], &mut rng), random(&[4, 5], &mut rng), random(&[5, 2], &mut rng)];
    assert_gradcheck("matmul chain", &ins, |g, v| {
        let ab = g.matmul(v[0], v[1])?;
        let abc = g.matmul(ab, v[2])?;
        weighted(g, abc)
    });
    assert_gradcheck("matmul_nt", &[random(&[3, 4], &mut rng), random(&[5, 4], &mut rng)], |g, v| {
        let o = g.matmul_nt(v[0], v[1])?;
        weighted(g, o)
    });
}

#[test]
fn gradcheck_elementwise_and_structural_ops() {
    let mut rng = SeededRng::new(5);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 4], &mut rng);
    let r = random(&[4], &mut rng);
    assert_gradcheck("add/sub/mul/scale", &[a.clone(), b.clone()], |g, v| {
        let s = g.add(v[0], v[1])?;
        let d = g.sub(s, v[1])?;
        let m = g.mul(d, v[1])?;
        let sc = g.scale(m, -1.7);
        weighted(g, sc)
    });
    assert_gradcheck("add_row", &[a.clone(), r.clone()], |g, v| {
        let o = g.add_row(v[0], v[1])?;
        weighted(g, o)
    });
    assert_gradcheck("gelu/tanh", &[a.clone()], |g, v| {
        let x = g.scale(v[0], 2.5);
        let o = g.gelu(x);
        let t = g.tanh(o);
        weighted(g, t)
    });
    assert_gradcheck("concat/slice/reshape", &[a.clone(), b.clone()], |g, v| {
        let rows = g.concat_rows(&[v[0], v[1]])?;
        let cols = g.concat_cols(&[v[0], v[1]])?;
        let sr = g.slice_rows(rows, 2, 3)?;
        let sc = g.slice_cols(cols, 3, 4)?;
        let m = g.mul(sr, sc)?;
        let flat = g.reshape(m, vec![12])?;
        weighted(g, flat)
    });
    assert_gradcheck("mean", &[a.clone()], |g, v| {
        let sq = g.mul(v[0], v[0])?;
        Ok(g.mean(sq))
    });
    let table = random(&[5, 3], &mut rng);
    assert_gradcheck("gather", &[table], |g, v| {
        let o = g.gather_rows(v[0], &[4, 0, 4, 2])?;
        weighted(g, o)
    });
}

#[test]
fn gradcheck_normalization_and_losses() {
    let mut rng = SeededRng::new(9);
    let x = random(&[3, 5], &mut rng);
    let gamma = random(&[5], &mut rng);
    let beta = random(&[5], &mut rng);
    assert_gradcheck("layer_norm", &[x.clone(), gamma, beta], |g, v| {
        let o = g.layer_norm(v[0], v[1], v[2])?;
        weighted(g, o)
    });
    for axis in 0..2 {
        assert_gradcheck("softmax", &[x.clone()], |g, v| {
            let o = g.softmax(v[0], axis)?;
            weighted(g, o)
        });
    }
    let allowed: Vec<bool> = (0..15).map(|i| i % 5 <= i / 5 + 1).collect();
    assert_gradcheck("masked_softmax", &[x.clone()], |g, v| {
        let o = g.masked_softmax(v[0], &allowed)?;
        weighted(g, o)
    });
    let target: Vec<f64> = (0..15).map(|i| (i as f64).sin()).collect();
    assert_gradcheck("mse", &[x.clone()], |g, v| g.mse(v[0], &target));
    assert_gradcheck("cross_entropy", &[x.clone()], |g, v| g.cross_entropy(v[0], &[4, 0, 2]));
}

#[test]
fn dropout_is_identity_in_eval_and_scaled_in_training() {
    let x = Tensor::full(&[1000], 1.0);
    let mut g = Graph::new();
    let v = g.input(&x);
    assert_eq!(g.dropout(v, 0.5), v);

    let mut g = Graph::training(SeededRng::new(1));
    let v = g.input(&x);
    let d = g.dropout(v, 0.25);
    let vals = g.value(d);
    assert!(vals.iter().all(|&y| y == 0.0 || (y - 1.0 / 0.75).abs() < 1e-15));
    let kept = vals.iter().filter(|&&y| y > 0.0).count();
    assert!((650..850).contains(&kept));
}

#[test]
fn forward_ops_are_bit_deterministic() {
    let run = || {
        let mut rng = SeededRng::new(77);
        let a = random(&[6, 6], &mut rng);
        let b = random(&[6, 6], &mut rng);
        let mut g = Graph::new();
        let (va, vb) = (g.input(&a), g.input(&b));
        let m = g.matmul(va, vb).unwrap();
        let s = g.softmax(m, 1).unwrap();
        g.tensor(s).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(vals in proptest::collection::vec(-10.0f64..10.0, 2..40)) {
        let s = softmax(&Tensor::vector(vals).unwrap(), 0).unwrap();
        let total: f64 = s.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(s.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn tensor_binary_roundtrip(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let t = random(&[rows, cols], &mut rng);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        prop_assert_eq!(Tensor::read_from(&mut buf.as_slice()).unwrap(), t);
    }
}

#[test]
fn cross_entropy_propagates_nan_logits() {
    let mut g = Graph::new();
    let x = g.constant(vec![1, 3], vec![f64::NAN, 0.0, 1.0]).unwrap();
    let l = g.cross_entropy(x, &[1]).unwrap();
    assert!(g.value(l)[0].is_nan());
}

#[test]
fn masked_softmax_propagates_nan_but_rejects_empty_rows() {
    let mut g = Graph::new();
    let x = g.constant(vec![2, 2], vec![f64::NAN, f64::NAN, 0.0, 1.0]).unwrap();
    let y = g.masked_softmax(x, &[true, true, true, false]).unwrap();
    assert!(g.value(y)[..2].iter().all(|v| v.is_nan()));
    assert_eq!(&g.value(y)[2..], &[1.0, 0.0]);
    assert!(matches!(
        g.masked_softmax(x, &[true, true, false, false]),
        Err(TensorError::EmptyMaskRow)
    ));
}
