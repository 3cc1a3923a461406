use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::model::{Meta4Model, PreparedSample};
use crate::schema::{ImageSchemaLabel, NUM_SCHEMAS};
use crate::{Error, Result};

use super::metrics::pose_metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Full,
    IsAblated,
    Mismatched,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Full, Condition::IsAblated, Condition::Mismatched];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Full => "full",
            Condition::IsAblated => "is_ablated",
            Condition::Mismatched => "mismatched",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Condition::Full),
            "is_ablated" | "is-ablated" => Ok(Condition::IsAblated),
            "mismatched" => Ok(Condition::Mismatched),
            _ => Err(Error::Config(format!(
                "unknown condition {s:?}; expected full, is-ablated or mismatched"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Seen,
    Unseen,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(Split::Seen),
            "unseen" => Ok(Split::Unseen),
            _ => Err(Error::Config(format!("unknown split {s:?}; expected seen or unseen"))),
        }
    }
}

/// Dataset means of the per-sample pose metrics under one condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub split: Split,
    pub condition: Condition,
    pub rmse: f64,
    pub mae: f64,
    pub pcc: f64,
    pub cosine: f64,
    pub samples: usize,
}

/// Maps every label to the next distinct label (by class index, cyclically)
/// among those present, so no sample keeps its own label.
pub fn mismatch_labels(labels: &[ImageSchemaLabel]) -> Result<Vec<ImageSchemaLabel>> {
    let present: Vec<ImageSchemaLabel> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if present.len() < 2 {
        return Err(Error::Invalid(format!(
            "the mismatched condition needs at least 2 distinct schema labels, found {}",
            present.len()
        )));
    }
    Ok(labels
        .iter()
        .map(|l| {
            let i = present.binary_search(l).expect("label is present");
            present[(i + 1) % present.len()]
        })
        .collect())
}

/// The schema vector each sample receives under `condition`.
pub fn condition_vectors(
    data: &[PreparedSample],
    condition: Condition,
) -> Result<Vec<[f64; NUM_SCHEMAS]>> {
    Ok(match condition {
        Condition::Full => data.iter().map(|s| s.schema).collect(),
        Condition::IsAblated => vec![[0.0; NUM_SCHEMAS]; data.len()],
        Condition::Mismatched => {
            let labels: Vec<_> = data.iter().map(|s| s.label).collect();
            mismatch_labels(&labels)?.into_iter().map(|l| l.one_hot()).collect()
        }
    })
}

/// Generates every sample under `condition` and averages the four metrics
/// in dataset order.
pub fn run_condition(
    model: &Meta4Model,
    data: &[PreparedSample],
    condition: Condition,
    split: Split,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty dataset".into()));
    }
    let vectors = condition_vectors(data, condition)?;
    let mut sums = [0.0; 4];
    for (s, v) in data.iter().zip(&vectors) {
        let pred = model.predict_patches(&model.standardize(&s.patches), v)?;
        let m = pose_metrics(&pred, &s.target)?;
        for (acc, x) in sums.iter_mut().zip([m.rmse, m.mae, m.pcc, m.cosine]) {
            *acc += x;
        }
    }
    let n = data.len() as f64;
    Ok(MetricsReport {
        split,
        condition,
        rmse: sums[0] / n,
        mae: sums[1] / n,
        pcc: sums[2] / n,
        cosine: sums[3] / n,
        samples: data.len(),
    })
}

/// Two splits times three conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub rows: Vec<MetricsReport>,
}

pub const CSV_HEADER: &str = "split,condition,rmse,mae,pcc,cosine";

impl ProtocolReport {
    pub fn get(&self, split: Split, condition: Condition) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.split == split && r.condition == condition)
    }

    /// Values rounded to 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out += &format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.split, r.condition, r.rmse, r.mae, r.pcc, r.cosine
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<7} {:<11} {:>10} {:>10} {:>10} {:>10} {:>7}\n",
            "split", "condition", "rmse", "mae", "pcc", "cosine", "n"
        );
        for r in &self.rows {
            out += &format!(
                "{:<7} {:<11} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>7}\n",
                r.split.as_str(),
                r.condition.as_str(),
                r.rmse,
                r.mae,
                r.pcc,
                r.cosine,
                r.samples
            );
        }
        out
    }
}

/// Evaluates all three conditions on held-in segments of the training
/// speakers and on segments of held-out speakers.
pub fn seen_unseen_protocol(
    model: &Meta4Model,
    seen: &[PreparedSample],
    unseen: &[PreparedSample],
    train_speakers: &[String],
    held_out_speakers: &[String],
) -> Result<ProtocolReport> {
    let train: BTreeSet<&str> = train_speakers.iter().map(String::as_str).collect();
    let held: BTreeSet<&str> = held_out_speakers.iter().map(String::as_str).collect();
    if let Some(s) = train.intersection(&held).next() {
        return Err(Error::Invalid(format!("speaker {s} is both seen and held out")));
    }
    let check = |data: &[PreparedSample], allowed: &BTreeSet<&str>, what: &str| -> Result<()> {
        match data.iter().find(|s| !allowed.contains(s.speaker_id.as_str())) {
            Some(s) => Err(Error::Invalid(format!(
                "{what} sample {} belongs to speaker {} outside that split",
                s.id, s.speaker_id
            ))),
            None => Ok(()),
        }
    };
    check(seen, &train, "seen")?;
    check(unseen, &held, "unseen")?;
    let mut rows = Vec::with_capacity(6);
    for (split, data) in [(Split::Seen, seen), (Split::Unseen, unseen)] {
        for condition in Condition::ALL {
            rows.push(run_condition(model, data, condition, split)?);
        }
    }
    Ok(ProtocolReport { rows })
}
