//! Dataset layout:
//!
//! ```text
//! <root>/manifest.json          format tag, 14-label vocabulary, sample ids
//! <root>/<id>/audio.wav         mono 32-bit float, 16 kHz
//! <root>/<id>/transcript.txt    UTF-8, no trailing newline
//! <root>/<id>/poses.csv         header Nose_x,Nose_y,...,LHip_y; 64 rows x 22
//! <root>/<id>/meta.json         speaker id, optional schema labels, normalization
//! ```
//!
//! Pose values are written in Rust's shortest round-trip float form, so a
//! save/load cycle is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledText, SegmentSample};
use crate::audio::{compute_mel, load_wav, write_wav, SampleFormat};
use crate::error::IoContext;
use crate::pose::{NormalizationParams, PoseSequence, SkeletonDefinition, FRAMES, POSE_DIM};
use crate::schema::ImageSchemaLabel;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const DATASET_FORMAT: &str = "meta4-pose-dataset/1";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    format: String,
    labels: Vec<String>,
    samples: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    speaker_id: String,
    schema: Option<ImageSchemaLabel>,
    #[serde(default)]
    oracle_schema: Option<ImageSchemaLabel>,
    normalization: NormalizationParams,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").at(path)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn save_pose_dataset(root: &Path, samples: &[SegmentSample]) -> Result<()> {
    fs::create_dir_all(root).at(root)?;
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        labels: ImageSchemaLabel::ALL.iter().map(|l| l.to_string()).collect(),
        samples: samples.iter().map(|s| s.id.clone()).collect(),
    };
    for s in samples {
        if s.id.is_empty() || s.id.contains(['/', '\\']) || s.id.starts_with('.') {
            return Err(Error::Invalid(format!("sample id {:?} is not a valid directory name", s.id)));
        }
        let dir = root.join(&s.id);
        fs::create_dir_all(&dir).at(&dir)?;
        write_wav(&dir.join("audio.wav"), &s.audio, SampleFormat::Float32)?;
        let tpath = dir.join("transcript.txt");
        fs::write(&tpath, &s.transcript).at(&tpath)?;
        write_poses_csv(&dir.join("poses.csv"), &s.poses.data)?;
        let meta = SampleMeta {
            speaker_id: s.speaker_id.clone(),
            schema: s.schema,
            oracle_schema: s.oracle_schema,
            normalization: s.poses.params.clone(),
        };
        write_json(&dir.join("meta.json"), &meta)?;
    }
    write_json(&root.join("manifest.json"), &manifest)
}

pub fn load_pose_dataset(root: &Path) -> Result<Vec<SegmentSample>> {
    let mpath = root.join("manifest.json");
    let manifest: DatasetManifest = read_json(&mpath)?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::parse(&mpath, format!("unsupported format {:?}", manifest.format)));
    }
    for l in &manifest.labels {
        l.parse::<ImageSchemaLabel>()
            .map_err(|e| Error::parse(&mpath, e.to_string()))?;
    }
    manifest
        .samples
        .iter()
        .map(|id| {
            let dir = root.join(id);
            let audio = load_wav(&dir.join("audio.wav"))?;
            let tpath = dir.join("transcript.txt");
            let transcript = fs::read_to_string(&tpath).at(&tpath)?;
            let meta: SampleMeta = read_json(&dir.join("meta.json"))?;
            let data = read_poses_csv(&dir.join("poses.csv"))?;
            Ok(SegmentSample {
                id: id.clone(),
                mel: compute_mel(&audio)?,
                audio,
                transcript,
                schema: meta.schema,
                oracle_schema: meta.oracle_schema,
                poses: PoseSequence::new(data, meta.normalization)?,
                speaker_id: meta.speaker_id,
            })
        })
        .collect()
}

/// Writes a `frames x 22` pose matrix with the joint-axis header.
pub fn write_poses_csv(path: &Path, data: &Tensor) -> Result<()> {
    let mut out = SkeletonDefinition::default().column_names().join(",");
    out.push('\n');
    for t in 0..data.rows() {
        let row: Vec<String> = data.row(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).at(path)
}

/// Reads a pose CSV; requires exactly 64 rows of 22 finite numbers.
pub fn read_poses_csv(path: &Path) -> Result<Tensor> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let expected = SkeletonDefinition::default().column_names();
    let header = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse(
            path,
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut data = Vec::with_capacity(FRAMES * POSE_DIM);
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = i + 2;
        if rec.len() != POSE_DIM {
            return Err(Error::parse(
                path,
                format!("line {line}: expected {POSE_DIM} columns, found {}", rec.len()),
            ));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, format!("line {line}: bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, format!("line {line}: non-finite value")));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != FRAMES {
        return Err(Error::parse(path, format!("expected {FRAMES} pose rows, found {rows}")));
    }
    Ok(Tensor::new(vec![FRAMES, POSE_DIM], data)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusRow {
    text: String,
    label: String,
}

/// Reads a `text,label` CSV. Duplicate rows are kept; ids are row indices.
pub fn load_schema_corpus(path: &Path) -> Result<Vec<LabeledText>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let header = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if header.iter().ne(["text", "label"]) {
        return Err(Error::parse(path, "header must be exactly `text,label`"));
    }
    rdr.deserialize::<CorpusRow>()
        .enumerate()
        .map(|(id, row)| {
            let row = row.map_err(|e| Error::parse(path, e.to_string()))?;
            let label = row
                .label
                .parse::<ImageSchemaLabel>()
                .map_err(|e| Error::parse(path, format!("row {}: {e}", id + 1)))?;
            Ok(LabeledText {
                id,
                text: row.text,
                label,
            })
        })
        .collect()
}

pub fn save_schema_corpus(path: &Path, corpus: &[LabeledText]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for s in corpus {
        w.serialize(CorpusRow {
            text: s.text.clone(),
            label: s.label.to_string(),
        })
        .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().at(path)
}
