//! Checkpoint files.
//!
//! A checkpoint is a pair of files sharing a stem: `<stem>.json` holds the
//! manifest (tensor names, shapes, byte offsets, frozen flags, seed and step
//! count) and `<stem>.bin` holds the raw little-endian `f32` payload of every
//! tensor, concatenated in manifest order. Reloading reproduces every value
//! bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::params::{group_of, ParamBundle};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen: bool,
    /// Byte offset into the payload file.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub const FORMAT: &str = "taskdisc-checkpoint-v1";

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Serializes the manifest and payload into memory.
pub fn encode(bundle: &ParamBundle, seed: u64, step: u64, extra: serde_json::Value) -> (Manifest, Vec<u8>) {
    let mut payload = Vec::new();
    let mut tensors = Vec::with_capacity(bundle.len());
    for (name, t) in bundle.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            frozen: bundle.is_frozen(name),
            offset: payload.len() as u64,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        seed,
        step,
        tensors,
        extra,
    };
    (manifest, payload)
}

pub fn decode(manifest: &Manifest, payload: &[u8]) -> Result<ParamBundle> {
    if manifest.format != FORMAT {
        return Err(NeuralError::Checkpoint(format!("unknown format {}", manifest.format)));
    }
    let mut bundle = ParamBundle::new();
    for e in &manifest.tensors {
        let count: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + count * 4;
        let bytes = payload
            .get(start..end)
            .ok_or_else(|| NeuralError::Checkpoint(format!("payload too short for {}", e.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        bundle.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?)?;
        if e.frozen {
            bundle.freeze(group_of(&e.name));
        }
    }
    Ok(bundle)
}

pub fn save(stem: &Path, bundle: &ParamBundle, seed: u64, step: u64, extra: serde_json::Value) -> Result<Manifest> {
    let (manifest, payload) = encode(bundle, seed, step, extra);
    let (json, bin) = paths(stem);
    if let Some(dir) = json.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&json, serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(&bin, payload)?;
    Ok(manifest)
}

pub fn load(stem: &Path) -> Result<(ParamBundle, Manifest)> {
    let (json, bin) = paths(stem);
    let manifest: Manifest = serde_json::from_slice(&fs::read(&json)?)?;
    let payload = fs::read(&bin)?;
    let bundle = decode(&manifest, &payload)?;
    Ok((bundle, manifest))
}
