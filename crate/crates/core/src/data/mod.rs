//! Corpora: the synthetic gesture dataset, schema text corpora, and their
//! on-disk formats.

mod io;
pub mod synth;
pub mod text;

pub use io::{
    load_pose_dataset, load_schema_corpus, read_poses_csv, save_pose_dataset, save_schema_corpus,
    write_poses_csv, DATASET_FORMAT,
};
pub use synth::synth_gesture_dataset;
pub use text::{synth_schema_corpus, transcript_for, LabeledText};

use crate::audio::{MelSpectrogram, Waveform};
use crate::pose::PoseSequence;
use crate::schema::ImageSchemaLabel;

/// One aligned unit of speech audio, transcript and 64-frame pose sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSample {
    pub id: String,
    pub audio: Waveform,
    pub mel: MelSpectrogram,
    pub transcript: String,
    /// When set, used instead of the classifier's output for this segment.
    pub schema: Option<ImageSchemaLabel>,
    /// Generator ground truth for synthetic data; never read by the model.
    pub oracle_schema: Option<ImageSchemaLabel>,
    pub poses: PoseSequence,
    pub speaker_id: String,
}
