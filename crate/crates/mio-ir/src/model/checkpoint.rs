//! Binary checkpoint container.
//!
//! Layout: 4-byte magic, u32 version, u64 header length, JSON header
//! (kind, config, extra state, tensor directory), then the tensor payloads
//! as little-endian f64 in directory order. Files are written to a
//! temporary sibling and renamed so a crash never leaves a partial file
//! under the final name.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MIO1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    extra: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Everything a checkpoint holds: a kind tag ("model", "classifier",
/// "run"), the serialized config, free-form extra state, and named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointPayload {
    pub kind: String,
    pub config: serde_json::Value,
    pub extra: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl CheckpointPayload {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint(format!("{}: {}", path.display(), msg.into()))
}

pub fn write_checkpoint(path: &Path, payload: &CheckpointPayload) -> Result<()> {
    let header = Header {
        kind: payload.kind.clone(),
        config: payload.config.clone(),
        extra: payload.extra.clone(),
        tensors: payload
            .tensors
            .iter()
            .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| ckpt_err(path, format!("header serialization failed: {e}")))?;

    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut write = |buf: &[u8]| f.write_all(buf).map_err(|e| Error::io(&tmp, e));
    write(&CHECKPOINT_MAGIC)?;
    write(&CHECKPOINT_VERSION.to_le_bytes())?;
    write(&(header_bytes.len() as u64).to_le_bytes())?;
    write(&header_bytes)?;
    for (_, t) in &payload.tensors {
        for &v in t.data() {
            write(&v.to_le_bytes())?;
        }
    }
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointPayload> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(ckpt_err(path, format!("file is {} bytes, too short for a header", bytes.len())));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ckpt_err(path, "bad magic, not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ckpt_err(path, format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload_start = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len());
    let Some(payload_start) = payload_start else {
        return Err(ckpt_err(path, "truncated header"));
    };
    let header: Header = serde_json::from_slice(&bytes[16..payload_start])
        .map_err(|e| ckpt_err(path, format!("malformed header: {e}")))?;

    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    let payload = &bytes[payload_start..];
    if payload.len() != total * 8 {
        return Err(ckpt_err(
            path,
            format!("payload holds {} bytes, directory expects {}", payload.len(), total * 8),
        ));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut off = 0;
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let data: Vec<f64> = payload[off..off + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += n * 8;
        let t = Tensor::new(entry.shape.clone(), data)
            .map_err(|e| ckpt_err(path, format!("tensor {}: {e}", entry.name)))?;
        tensors.push((entry.name, t));
    }
    Ok(CheckpointPayload { kind: header.kind, config: header.config, extra: header.extra, tensors })
}
