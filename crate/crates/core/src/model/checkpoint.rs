//! Checkpoint file: `RFBPCKPT`, a little-endian `u64` header length, a JSON
//! header (architecture plus tensor manifest) and a little-endian `f32` blob
//! holding the tensors in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExtractorConfig, NetConfig, TrainConfig};
use super::net::RfbpNet;
use super::train::History;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RFBPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config: TrainConfig,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    architecture: NetConfig,
    tensors: Vec<TensorEntry>,
    blob_bytes: u64,
    training: Option<TrainingMeta>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: RfbpNet<f32>,
    pub training: Option<TrainingMeta>,
}

pub fn encode_checkpoint(net: &RfbpNet<f32>, training: Option<&TrainingMeta>) -> Result<Vec<u8>> {
    let state = net.state();
    let mut tensors = Vec::with_capacity(state.len());
    let mut blob = Vec::new();
    for (name, t) in &state {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        architecture: net.config.clone(),
        tensors,
        blob_bytes: blob.len() as u64,
        training: training.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(Error::Format(format!(
            "checkpoint header: expected {hlen} bytes, found {}",
            body.len()
        )));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])
        .map_err(|e| Error::Format(format!("checkpoint header is not valid JSON: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: header.version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let blob = &body[hlen..];
    let mut net = RfbpNet::<f32>::new(header.architecture.clone())?;
    let expected_entries: Vec<(String, Vec<usize>)> = net
        .state()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let expected_bytes: u64 = expected_entries
        .iter()
        .map(|(_, s)| s.iter().product::<usize>() as u64 * 4)
        .sum();
    if header.blob_bytes != expected_bytes || blob.len() as u64 != expected_bytes {
        return Err(Error::Format(format!(
            "checkpoint blob: architecture needs {expected_bytes} bytes, header declares {}, \
             found {}",
            header.blob_bytes,
            blob.len()
        )));
    }
    if header.tensors.len() != expected_entries.len() {
        return Err(Error::Format(format!(
            "checkpoint manifest lists {} tensors, architecture has {}",
            header.tensors.len(),
            expected_entries.len()
        )));
    }
    let mut offset = 0u64;
    for (entry, (name, shape)) in header.tensors.iter().zip(&expected_entries) {
        if &entry.name != name || &entry.shape != shape || entry.offset != offset {
            return Err(Error::Format(format!(
                "manifest entry {}{:?}@{} does not match architecture tensor {name}{shape:?}@{offset}",
                entry.name, entry.shape, entry.offset
            )));
        }
        offset += shape.iter().product::<usize>() as u64 * 4;
    }
    for (entry, t) in header.tensors.iter().zip(net.state_mut()) {
        let start = entry.offset as usize;
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            let p = start + 4 * i;
            *v = f32::from_le_bytes(blob[p..p + 4].try_into().expect("4 bytes"));
        }
        if !t.all_finite() {
            return Err(Error::Integrity(format!(
                "checkpoint tensor '{}' holds NaN/Inf",
                entry.name
            )));
        }
    }
    Ok(Checkpoint {
        net,
        training: header.training,
    })
}

pub fn save_checkpoint(
    net: &RfbpNet<f32>,
    training: Option<&TrainingMeta>,
    path: &Path,
) -> Result<()> {
    let bytes = encode_checkpoint(net, training)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and checks it against the extractor the caller expects.
pub fn load_checkpoint_for(path: &Path, expected: &ExtractorConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    let found = &ck.net.config.extractor;
    if found.feature_size != expected.feature_size {
        return Err(Error::Config(format!(
            "checkpoint has feature_size {}, configuration expects {}",
            found.feature_size, expected.feature_size
        )));
    }
    if found != expected {
        return Err(Error::Config(format!(
            "checkpoint extractor {found:?} differs from the configured {expected:?}"
        )));
    }
    Ok(ck)
}
