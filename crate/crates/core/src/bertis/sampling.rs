use std::collections::BTreeMap;

use crate::data::LabeledText;
use crate::schema::ImageSchemaLabel;
use crate::tensor::SeededRng;
use crate::{Error, Result};

/// Tops up every class present in `data` to the largest class count by
/// drawing that class's samples with replacement. Originals come first, in
/// their input order; duplicates follow, grouped by class.
pub fn oversample(data: &[LabeledText], rng: &mut SeededRng) -> Result<Vec<LabeledText>> {
    if data.is_empty() {
        return Err(Error::Invalid("cannot oversample an empty dataset".into()));
    }
    let mut by_class: BTreeMap<ImageSchemaLabel, Vec<&LabeledText>> = BTreeMap::new();
    for s in data {
        by_class.entry(s.label).or_default().push(s);
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut out = data.to_vec();
    for members in by_class.values() {
        for _ in members.len()..target {
            out.push(members[rng.below(members.len())].clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<LabeledText>,
    pub val: Vec<LabeledText>,
    pub test: Vec<LabeledText>,
}

/// Stratified 80/10/10 split. Each class is ordered by sample id and then
/// shuffled with a stream derived from `(seed, class)`, so the assignment
/// depends only on the seed and the ids, never on input order. Per class,
/// `round(0.8 n)` go to train, `round(0.1 n)` to validation and the rest to
/// test. Each split is returned sorted by id.
pub fn split_corpus(data: &[LabeledText], seed: u64) -> Result<CorpusSplit> {
    if data.len() < 10 {
        return Err(Error::Invalid(format!(
            "need at least 10 samples to split, got {}",
            data.len()
        )));
    }
    let mut by_class: BTreeMap<ImageSchemaLabel, Vec<&LabeledText>> = BTreeMap::new();
    for s in data {
        by_class.entry(s.label).or_default().push(s);
    }
    let root = SeededRng::new(seed);
    let mut split = CorpusSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (label, mut members) in by_class {
        members.sort_by_key(|s| s.id);
        root.fork(label.index() as u64).shuffle(&mut members);
        let n = members.len() as f64;
        let n_train = (0.8 * n).round() as usize;
        let n_val = ((0.1 * n).round() as usize).min(members.len() - n_train);
        for (i, s) in members.into_iter().enumerate() {
            let dst = if i < n_train {
                &mut split.train
            } else if i < n_train + n_val {
                &mut split.val
            } else {
                &mut split.test
            };
            dst.push(s.clone());
        }
    }
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.sort_by_key(|s| s.id);
    }
    Ok(split)
}
