use proptest::prelude::*;

use super::*;
use crate::model::{Meta4Arch, Meta4Model, PreparedSample};
use crate::pose::{FRAMES, POSE_DIM};
use crate::schema::{ImageSchemaLabel as L, NUM_SCHEMAS};
use crate::tensor::{SeededRng, Tensor};

// Independent reference formulas: explicit index loops, two-pass sums and
// the raw-moment correlation formula.

fn oracle_rmse(p: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - g[i]).powi(2);
    }
    (s / p.len() as f64).sqrt()
}

fn oracle_mae(p: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += if p[i] > g[i] { p[i] - g[i] } else { g[i] - p[i] };
    }
    s / p.len() as f64
}

fn oracle_pcc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn oracle_cosine(x: &[f64], y: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for i in 0..x.len() {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    dot / (nx * ny).sqrt()
}

#[test]
fn regression_metrics_match_reference_formulas_on_1000_cases() {
    let mut rng = SeededRng::new(42);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 2 + rng.below(99);
        let p: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        for (ours, oracle) in [
            (rmse(&p, &g).unwrap(), oracle_rmse(&p, &g)),
            (mae(&p, &g).unwrap(), oracle_mae(&p, &g)),
            (pcc(&p, &g).unwrap(), oracle_pcc(&p, &g)),
            (cosine_similarity(&p, &g).unwrap(), oracle_cosine(&p, &g)),
        ] {
            worst = worst.max((ours - oracle).abs());
        }
    }
    assert!(worst < 1e-12, "max deviation {worst:e}");
}

#[test]
fn metric_identities() {
    let g = [0.3, -1.0, 2.0, 0.5];
    assert_eq!(rmse(&g, &g).unwrap(), 0.0);
    assert_eq!(mae(&g, &g).unwrap(), 0.0);
    let shifted: Vec<f64> = g.iter().map(|v| v + 1.0).collect();
    assert!((rmse(&shifted, &g).unwrap() - 1.0).abs() < 1e-15);
    assert!((mae(&shifted, &g).unwrap() - 1.0).abs() < 1e-15);
    assert!((pcc(&g, &g).unwrap() - 1.0).abs() < 1e-15);
    assert!((cosine_similarity(&g, &g).unwrap() - 1.0).abs() < 1e-15);
    let zero_mean = [1.0, -2.0, 3.0, -2.0];
    let neg: Vec<f64> = zero_mean.iter().map(|v| -v).collect();
    assert!((pcc(&neg, &zero_mean).unwrap() + 1.0).abs() < 1e-15);
}

#[test]
fn degenerate_metric_inputs_are_errors() {
    assert!(pcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(pcc(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).is_err());
    assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    assert!(mae(&[], &[]).is_err());
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[3, 2]);
    assert!(pose_metrics(&a, &b).is_err());
}

proptest! {
    #[test]
    fn rmse_bounds_mae(v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..100)) {
        let (p, g): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let (r, m) = (rmse(&p, &g).unwrap(), mae(&p, &g).unwrap());
        prop_assert!(r >= m - 1e-12 && m >= 0.0);
    }
}

#[test]
fn hand_confusion_example() {
    let (a, b) = (L::CenterPeriphery, L::Contact);
    let gt = [a, a, b, b];
    let pred = [a, b, b, b];
    let r = classification_report(&pred, &gt).unwrap();
    let ca = r.class(a);
    assert_eq!(ca.precision, 1.0);
    assert_eq!(ca.recall, 0.5);
    assert_eq!(ca.f1, 2.0 / 3.0);
    assert_eq!(r.accuracy, 0.75);
    let cb = r.class(b);
    assert_eq!((cb.precision, cb.recall), (2.0 / 3.0, 1.0));
    assert!(r.class(L::Verticality).absent);
    assert_eq!(r.class(L::Verticality).f1, 0.0);
    assert!(!ca.absent);
    assert_eq!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs(), 0.0);
    assert!(r.to_table().contains("(absent)"));
}

#[test]
fn classification_report_accuracy_is_trace_over_total() {
    let mut rng = SeededRng::new(5);
    for _ in 0..1000 {
        let n = 1 + rng.below(60);
        let gt: Vec<L> = (0..n).map(|_| L::ALL[rng.below(NUM_SCHEMAS)]).collect();
        let pred: Vec<L> = (0..n).map(|_| L::ALL[rng.below(NUM_SCHEMAS)]).collect();
        let r = classification_report(&pred, &gt).unwrap();
        let trace: usize = (0..NUM_SCHEMAS).map(|c| r.confusion[c][c]).sum();
        assert_eq!(r.accuracy, trace as f64 / n as f64);
        // Brute-force per-class counts.
        for c in L::ALL {
            let tp = (0..n).filter(|&i| gt[i] == c && pred[i] == c).count();
            let fp = (0..n).filter(|&i| gt[i] != c && pred[i] == c).count();
            let fn_ = (0..n).filter(|&i| gt[i] == c && pred[i] != c).count();
            let m = r.class(c);
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let rc = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
            assert!((m.precision - p).abs() < 1e-12 && (m.recall - rc).abs() < 1e-12);
            assert!((m.f1 - f).abs() < 1e-12);
        }
    }
}

#[test]
fn perfect_predictions_score_one() {
    let gt: Vec<L> = L::ALL.to_vec();
    let r = classification_report(&gt, &gt).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.macro_f1, 1.0);
    assert!(r.per_class.iter().all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0));
    assert!(classification_report(&gt[..3], &gt).is_err());
}

#[test]
fn mismatched_labels_never_keep_their_own() {
    let mut rng = SeededRng::new(8);
    for _ in 0..200 {
        let n = 2 + rng.below(30);
        let mut labels: Vec<L> = (0..n).map(|_| L::ALL[rng.below(NUM_SCHEMAS)]).collect();
        if labels.iter().all(|l| *l == labels[0]) {
            labels[1] = if labels[0] == L::Scale { L::Force } else { L::Scale };
        }
        let shifted = mismatch_labels(&labels).unwrap();
        assert!(labels.iter().zip(&shifted).all(|(a, b)| a != b));
    }
    assert!(mismatch_labels(&[L::Link]).is_err());
    assert!(mismatch_labels(&[L::Link, L::Link]).is_err());
    assert_eq!(
        mismatch_labels(&[L::Scale, L::Contact, L::Scale]).unwrap(),
        vec![L::Contact, L::Scale, L::Contact]
    );
}

fn tiny_model() -> Meta4Model {
    let arch = Meta4Arch {
        audio_layers: 1,
        audio_heads: 4,
        ..Meta4Arch::default()
    };
    let mut m = Meta4Model::new(arch, 3).unwrap();
    m.trained = true;
    m
}

fn random_sample(id: usize, speaker: &str, label: L, rng: &mut SeededRng) -> PreparedSample {
    let patches = (0..6 * 256).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let target = (0..FRAMES * POSE_DIM).map(|_| rng.uniform(-1.0, 1.0)).collect();
    PreparedSample {
        id: format!("s{id}"),
        speaker_id: speaker.to_string(),
        patches: Tensor::new(vec![6, 256], patches).unwrap(),
        schema: label.one_hot(),
        label,
        target: Tensor::new(vec![FRAMES, POSE_DIM], target).unwrap(),
    }
}

#[test]
fn condition_vectors_follow_their_definitions() {
    let mut rng = SeededRng::new(1);
    let data: Vec<_> = [L::Link, L::Scale, L::Link]
        .iter()
        .enumerate()
        .map(|(i, l)| random_sample(i, "a", *l, &mut rng))
        .collect();
    let full = condition_vectors(&data, Condition::Full).unwrap();
    assert!(full.iter().zip(&data).all(|(v, s)| *v == s.schema));
    let ablated = condition_vectors(&data, Condition::IsAblated).unwrap();
    assert!(ablated.iter().all(|v| v.iter().all(|x| *x == 0.0)));
    let mm = condition_vectors(&data, Condition::Mismatched).unwrap();
    assert_eq!(mm[0], L::Scale.one_hot());
    assert_eq!(mm[1], L::Link.one_hot());
    assert!(condition_vectors(&data[..1], Condition::Mismatched).is_err());
}

#[test]
fn protocol_yields_six_rows_and_rejects_overlap() {
    let model = tiny_model();
    let mut rng = SeededRng::new(2);
    let seen: Vec<_> = (0..2).map(|i| random_sample(i, "a", L::ALL[i], &mut rng)).collect();
    let unseen: Vec<_> = (2..4).map(|i| random_sample(i, "b", L::ALL[i], &mut rng)).collect();
    let (a, b) = (vec!["a".to_string()], vec!["b".to_string()]);
    let report = seen_unseen_protocol(&model, &seen, &unseen, &a, &b).unwrap();
    assert_eq!(report.rows.len(), 6);
    for split in [Split::Seen, Split::Unseen] {
        for c in Condition::ALL {
            let r = report.get(split, c).unwrap();
            assert!(r.rmse >= r.mae && r.mae > 0.0);
            assert!((-1.0..=1.0).contains(&r.pcc) && (-1.0..=1.0).contains(&r.cosine));
        }
    }
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("seen,full,"));
    assert!(lines[6].starts_with("unseen,mismatched,"));
    let rmse_field = lines[1].split(',').nth(2).unwrap();
    assert_eq!(rmse_field, format!("{:.6}", report.rows[0].rmse));
    assert_eq!(rmse_field.split('.').nth(1).unwrap().len(), 6);

    let both = vec!["a".to_string(), "b".to_string()];
    assert!(seen_unseen_protocol(&model, &seen, &unseen, &both, &b).is_err());
    // Unseen data from a training speaker is rejected too.
    assert!(seen_unseen_protocol(&model, &seen, &seen, &a, &b).is_err());
    assert!(run_condition(&model, &[], Condition::Full, Split::Seen).is_err());
}

#[test]
fn condition_names_parse() {
    for c in Condition::ALL {
        assert_eq!(c.as_str().parse::<Condition>().unwrap(), c);
    }
    assert_eq!("is-ablated".parse::<Condition>().unwrap(), Condition::IsAblated);
    assert!("ablated".parse::<Condition>().is_err());
    assert_eq!("unseen".parse::<Split>().unwrap(), Split::Unseen);
}
