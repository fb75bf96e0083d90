//! Checkpoint directories: `header.json` describing named tensor groups and
//! `tensors.bin` holding every tensor as little-endian `f32`, in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const HEADER_NAME: &str = "header.json";
pub const TENSORS_NAME: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Offset in `f32` elements from the start of `tensors.bin`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub group: String,
    pub trainable: bool,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
    pub vocab_fingerprint: String,
    pub stores: Vec<StoreEntry>,
}

/// Everything but the tensor table, which [`save`] fills in.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub kind: String,
    pub config: serde_json::Value,
    pub dataset_fingerprint: Option<String>,
    pub vocab_fingerprint: String,
}

pub fn save(dir: &Path, meta: &CheckpointMeta, stores: &[(&str, &ParamStore)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0;
    let mut entries = Vec::with_capacity(stores.len());
    for (group, store) in stores {
        let mut tensors = Vec::with_capacity(store.len());
        for (name, m) in store.iter() {
            let (r, c) = m.dim();
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: [r, c],
                offset,
            });
            for v in m.iter() {
                blob.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            offset += r * c;
        }
        entries.push(StoreEntry {
            group: group.to_string(),
            trainable: store.is_trainable(),
            tensors,
        });
    }
    let header = CheckpointHeader {
        kind: meta.kind.clone(),
        config: meta.config.clone(),
        dataset_fingerprint: meta.dataset_fingerprint.clone(),
        vocab_fingerprint: meta.vocab_fingerprint.clone(),
        stores: entries,
    };
    let tensors_path = dir.join(TENSORS_NAME);
    fs::write(&tensors_path, &blob).map_err(|e| Error::io(&tensors_path, e))?;
    let header_path = dir.join(HEADER_NAME);
    let mut text = serde_json::to_vec_pretty(&header).expect("header serializes");
    text.push(b'\n');
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))
}

#[derive(Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub stores: Vec<(String, ParamStore)>,
}

impl Checkpoint {
    pub fn store(&self, group: &str) -> Result<&ParamStore> {
        self.stores
            .iter()
            .find(|(g, _)| g == group)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::Checkpoint(format!("no tensor group {group:?}")))
    }

    pub fn take_store(&mut self, group: &str) -> Result<ParamStore> {
        let pos = self
            .stores
            .iter()
            .position(|(g, _)| g == group)
            .ok_or_else(|| Error::Checkpoint(format!("no tensor group {group:?}")))?;
        Ok(self.stores.remove(pos).1)
    }

    pub fn config<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.header.config.clone())
            .map_err(|e| Error::Checkpoint(format!("config of {} checkpoint: {e}", self.header.kind)))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.header.kind
            )));
        }
        Ok(())
    }
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let header_path = dir.join(HEADER_NAME);
    if !header_path.exists() {
        return Err(Error::MissingArtifact(header_path));
    }
    let text = fs::read(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&text).map_err(|e| Error::json(&header_path, e))?;
    let tensors_path = dir.join(TENSORS_NAME);
    let blob = fs::read(&tensors_path).map_err(|e| Error::io(&tensors_path, e))?;
    let total = blob.len() / 4;
    let mut stores = Vec::with_capacity(header.stores.len());
    for entry in &header.stores {
        let mut store = ParamStore::new(entry.trainable);
        for t in &entry.tensors {
            let [r, c] = t.shape;
            if t.offset + r * c > total {
                return Err(Error::Checkpoint(format!(
                    "tensor {} extends past the end of {TENSORS_NAME}",
                    t.name
                )));
            }
            let values: Vec<f64> = blob[4 * t.offset..4 * (t.offset + r * c)]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            store.add(&t.name, Matrix::from_shape_vec((r, c), values).expect("sized"))?;
        }
        stores.push((entry.group.clone(), store));
    }
    Ok(Checkpoint { header, stores })
}
