//! Pose and classification metrics, and the three-condition evaluation over
//! seen and unseen speakers.

mod classification;
mod metrics;
mod protocol;

pub use classification::{classification_report, ClassMetrics, ClassificationReport};
pub use metrics::{cosine_similarity, mae, pcc, pose_metrics, rmse, PoseMetrics};
pub use protocol::{
    condition_vectors, mismatch_labels, run_condition, seen_unseen_protocol, Condition,
    MetricsReport, ProtocolReport, Split, CSV_HEADER,
};

#[cfg(test)]
mod tests;
