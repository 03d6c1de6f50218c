//! Binary model checkpoints.
//!
//! Layout: 8-byte magic `LAMBMDL1` (7 format bytes + 1 version byte), a u64
//! little-endian header length, a JSON header describing the tensors, then
//! each tensor's values as 64-bit little-endian IEEE-754 in header order.
//! Serialization is deterministic, so identical parameters produce identical
//! bytes and the file's SHA-256 works as a model fingerprint.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Parameter;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LAMBMDL1";
const VERSION: u8 = b'1';

/// Shape entry for one tensor; values follow in this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// JSON header stored after the magic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Model family tag, e.g. `"bi-encoder"` or `"loc-module"`.
    pub kind: String,
    pub seed: u64,
    /// Echo of the model's structural config, for reload.
    pub config: serde_json::Value,
    pub params: Vec<TensorMeta>,
}

/// Serialize a checkpoint to bytes.
pub fn checkpoint_bytes(
    kind: &str,
    seed: u64,
    config: &serde_json::Value,
    params: &[&Parameter],
) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        kind: kind.to_string(),
        seed,
        config: config.clone(),
        params: params
            .iter()
            .map(|p| TensorMeta {
                name: p.name.clone(),
                rows: p.rows,
                cols: p.cols,
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let tensor_len: usize = params.iter().map(|p| p.len() * 8).sum();
    let mut out = Vec::with_capacity(8 + 8 + header_json.len() + tensor_len);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for p in params {
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    kind: &str,
    seed: u64,
    config: &serde_json::Value,
    params: &[&Parameter],
) -> Result<()> {
    let bytes = checkpoint_bytes(kind, seed, config, params)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Parse checkpoint bytes; `label` names the source in errors.
pub fn read_checkpoint_bytes(bytes: &[u8], label: &str) -> Result<(CheckpointHeader, Vec<Parameter>)> {
    let take = |offset: usize, len: usize, what: &'static str| -> Result<&[u8]> {
        bytes.get(offset..offset + len).ok_or(Error::Truncated {
            path: label.to_string(),
            what,
        })
    };

    let magic = take(0, 8, "magic")?;
    if &magic[..7] != &CHECKPOINT_MAGIC[..7] {
        return Err(Error::BadMagic {
            path: label.to_string(),
        });
    }
    if magic[7] != VERSION {
        return Err(Error::VersionMismatch {
            path: label.to_string(),
            expected: VERSION,
            got: magic[7],
        });
    }

    let header_len = u64::from_le_bytes(take(8, 8, "header length")?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(16, header_len, "header")?)?;

    let mut offset = 16 + header_len;
    let mut params = Vec::with_capacity(header.params.len());
    for meta in &header.params {
        let n = meta.rows * meta.cols;
        let raw = take(offset, n * 8, "tensor values")?;
        offset += n * 8;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut p = Parameter::zeros(meta.name.clone(), meta.rows, meta.cols);
        p.values = values;
        params.push(p);
    }
    Ok((header, params))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Vec<Parameter>)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    read_checkpoint_bytes(&bytes, &path.display().to_string())
}

/// Hex SHA-256 of a byte stream; used to tie an index to its model.
pub fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
