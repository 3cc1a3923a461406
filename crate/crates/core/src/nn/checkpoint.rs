//! Named-tensor checkpoints.
//!
//! A checkpoint directory holds `manifest.json` (kind, config, tensor names
//! and shapes) and `tensors.bin`, the tensors in manifest order, each in the
//! binary tensor format.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::IoContext;
use crate::tensor::{ParamStore, Tensor};
use crate::{Error, Result};

pub const FORMAT: &str = "meta4-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub kind: String,
    pub config: Value,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub extra: Value,
}

pub fn save(dir: &Path, kind: &str, config: Value, extra: Value, store: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let manifest = Manifest {
        format: FORMAT.to_string(),
        kind: kind.to_string(),
        config,
        tensors: store
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        extra,
    };
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").at(&mpath)?;
    let tpath = dir.join(TENSORS_FILE);
    let mut w = BufWriter::new(File::create(&tpath).at(&tpath)?);
    for t in store.tensors() {
        t.write_to(&mut w)?;
    }
    w.flush().at(&tpath)?;
    Ok(())
}

pub fn load(dir: &Path, expected_kind: &str) -> Result<(Manifest, Vec<Tensor>)> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).at(&mpath)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&mpath, e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format {:?}", manifest.format)));
    }
    if manifest.kind != expected_kind {
        return Err(Error::Checkpoint(format!(
            "expected a {expected_kind} checkpoint, found {}",
            manifest.kind
        )));
    }
    let tpath = dir.join(TENSORS_FILE);
    let mut r = BufReader::new(File::open(&tpath).at(&tpath)?);
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let t = Tensor::read_from(&mut r)
            .map_err(|e| Error::parse(&tpath, format!("tensor {}: {e}", entry.name)))?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, manifest says {:?}",
                entry.name,
                t.shape(),
                entry.shape
            )));
        }
        tensors.push(t);
    }
    Ok((manifest, tensors))
}

/// Copies loaded tensors into a freshly built store; names and shapes must match exactly.
pub fn restore(store: &mut ParamStore, manifest: &Manifest, tensors: &[Tensor]) -> Result<()> {
    if store.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "model has {} tensors, checkpoint has {}",
            store.len(),
            manifest.tensors.len()
        )));
    }
    for (id, (entry, t)) in store.ids().collect::<Vec<_>>().into_iter().zip(manifest.tensors.iter().zip(tensors)) {
        if store.name(id) != entry.name {
            return Err(Error::Checkpoint(format!(
                "expected tensor {}, found {}",
                store.name(id),
                entry.name
            )));
        }
        store.set_values(id, t).map_err(|_| {
            Error::Checkpoint(format!(
                "tensor {} has shape {:?}, model expects {:?}",
                entry.name,
                t.shape(),
                store.get(id).shape()
            ))
        })?;
    }
    Ok(())
}
