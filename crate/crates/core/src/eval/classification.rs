use std::fmt::Write as _;

use crate::schema::{ImageSchemaLabel, NUM_SCHEMAS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub label: ImageSchemaLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Ground-truth count.
    pub support: usize,
    /// No ground-truth samples of this class; recall and F1 are reported as 0.
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Mean F1 over classes that occur in the ground truth or the predictions.
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; NUM_SCHEMAS]; NUM_SCHEMAS],
    pub total: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_report(
    pred: &[ImageSchemaLabel],
    gt: &[ImageSchemaLabel],
) -> Result<ClassificationReport> {
    if pred.len() != gt.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Invalid("classification report of an empty set".into()));
    }
    let mut confusion = [[0usize; NUM_SCHEMAS]; NUM_SCHEMAS];
    for (p, t) in pred.iter().zip(gt) {
        confusion[t.index()][p.index()] += 1;
    }
    let mut per_class = Vec::with_capacity(NUM_SCHEMAS);
    let (mut f1_sum, mut counted) = (0.0, 0);
    for label in ImageSchemaLabel::ALL {
        let c = label.index();
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..NUM_SCHEMAS).map(|t| confusion[t][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support > 0 || predicted > 0 {
            f1_sum += f1;
            counted += 1;
        }
        per_class.push(ClassMetrics {
            label,
            precision,
            recall,
            f1,
            support,
            absent: support == 0,
        });
    }
    let correct: usize = (0..NUM_SCHEMAS).map(|c| confusion[c][c]).sum();
    Ok(ClassificationReport {
        per_class,
        accuracy: ratio(correct, gt.len()),
        macro_f1: f1_sum / counted as f64,
        confusion,
        total: gt.len(),
    })
}

impl ClassificationReport {
    pub fn class(&self, label: ImageSchemaLabel) -> &ClassMetrics {
        &self.per_class[label.index()]
    }

    /// Aligned plain-text table, one row per class plus summary lines.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>9} {:>9} {:>9} {:>8}\n",
            "class", "precision", "recall", "f1", "support"
        );
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:<18} {:>9.4} {:>9.4} {:>9.4} {:>8}{}",
                m.label.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.support,
                if m.absent { "  (absent)" } else { "" }
            );
        }
        let _ = writeln!(out, "{:<18} {:>9.4}", "accuracy", self.accuracy);
        let _ = writeln!(out, "{:<18} {:>9.4}", "macro f1", self.macro_f1);
        out
    }
}
