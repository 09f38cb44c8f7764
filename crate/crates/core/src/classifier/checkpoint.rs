//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 8            | magic `SCADMLP\0`                         |
//! | 4            | format version (`u32`, currently 1)       |
//! | 8            | training seed (`u64`)                     |
//! | 4            | number of layer sizes `L` (`u32`)         |
//! | 8·L          | layer sizes (`u64` each)                  |
//! | 8            | parameter count `P` (`u64`)               |
//! | 8·P          | parameters as IEEE-754 `f64` bits         |
//! | 32           | SHA-256 of every preceding byte           |
//!
//! Parameters are flattened layer by layer: weights (`fan_in × fan_out`,
//! row-major) followed by the bias.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::mlp::MlpModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SCADMLP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &MlpModel) -> Vec<u8> {
    let params = model.parameters();
    let mut out = Vec::with_capacity(64 + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend(CHECKPOINT_VERSION.to_le_bytes());
    out.extend(model.seed().to_le_bytes());
    out.extend((model.layer_dims().len() as u32).to_le_bytes());
    for &d in model.layer_dims() {
        out.extend((d as u64).to_le_bytes());
    }
    out.extend((params.len() as u64).to_le_bytes());
    for p in params {
        out.extend(p.to_bits().to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format("checkpoint is truncated".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MlpModel> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let mut c = Cursor { bytes: &bytes[8..] };
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let seed = c.u64()?;
    let n_dims = c.u32()? as usize;
    let dims = (0..n_dims)
        .map(|_| c.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_params = c.u64()? as usize;
    if c.bytes.len() != n_params.saturating_mul(8).saturating_add(32) {
        return Err(Error::Format("checkpoint is truncated".into()));
    }
    let params: Vec<f64> = c
        .take(8 * n_params)?
        .chunks_exact(8)
        .map(|b| f64::from_bits(u64::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let body = bytes.len() - 32;
    if Sha256::digest(&bytes[..body]).as_slice() != &bytes[body..] {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }
    MlpModel::from_parameters(&dims, &params, seed).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_checkpoint(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpModel> {
    decode_checkpoint(&std::fs::read(path)?)
}
