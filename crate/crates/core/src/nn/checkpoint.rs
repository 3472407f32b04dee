//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LMCK"  u32 version  u8 precision(64|32)  [32]u8 sha256(spec json)  u32 blocks
//! per block: u32 rows  u32 cols  u32 bias_len  weight payload  bias payload
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ModelSpec, ParamBlock, ParamSet};
use crate::numerics::{Matrix, Precision, Real};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LMCK";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint holds {found} values, expected {expected}")]
    Precision { expected: Precision, found: String },
    #[error("checkpoint was written for a different model spec")]
    SpecMismatch,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("trailing bytes after checkpoint payload")]
    Trailing,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub precision: Precision,
    pub spec_digest: [u8; 32],
    pub blocks: u32,
}

/// SHA-256 of the `ModelSpec` JSON serialization.
pub fn spec_digest(spec: &ModelSpec) -> [u8; 32] {
    let json = serde_json::to_vec(spec).expect("ModelSpec serializes");
    Sha256::digest(&json).into()
}

pub fn write_checkpoint<T: Real>(spec: &ModelSpec, params: &ParamSet<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.len() * T::PRECISION.byte_width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::PRECISION.flag());
    out.extend_from_slice(&spec_digest(spec));
    out.extend_from_slice(&(params.blocks.len() as u32).to_le_bytes());
    for block in &params.blocks {
        for dim in [block.weight.rows(), block.weight.cols(), block.bias.len()] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in block.weight.as_slice().iter().chain(&block.bias) {
            v.write_le(&mut out);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn read_header(cur: &mut Cursor<'_>) -> Result<CheckpointHeader, CheckpointError> {
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let flag = cur.take(1)?[0];
    let precision = Precision::from_flag(flag).ok_or(CheckpointError::Precision {
        expected: Precision::F64,
        found: format!("flag {flag}"),
    })?;
    let spec_digest = cur.take(32)?.try_into().unwrap();
    let blocks = cur.u32()?;
    Ok(CheckpointHeader {
        version,
        precision,
        spec_digest,
        blocks,
    })
}

/// Parses a checkpoint, checking precision and that it belongs to `spec`.
pub fn read_checkpoint<T: Real>(spec: &ModelSpec, bytes: &[u8]) -> Result<ParamSet<T>, CheckpointError> {
    let mut cur = Cursor { bytes };
    let header = read_header(&mut cur)?;
    if header.precision != T::PRECISION {
        return Err(CheckpointError::Precision {
            expected: T::PRECISION,
            found: header.precision.to_string(),
        });
    }
    if header.spec_digest != spec_digest(spec) {
        return Err(CheckpointError::SpecMismatch);
    }
    let width = T::PRECISION.byte_width();
    let mut blocks = Vec::with_capacity(header.blocks as usize);
    for _ in 0..header.blocks {
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let bias_len = cur.u32()? as usize;
        let mut read = |n: usize| -> Result<Vec<T>, CheckpointError> {
            let raw = cur.take(n.checked_mul(width).ok_or(CheckpointError::Truncated)?)?;
            Ok(raw.chunks_exact(width).map(T::read_le).collect())
        };
        let weight = read(rows * cols)?;
        let bias = read(bias_len)?;
        let weight = Matrix::from_vec(rows, cols, weight).expect("length checked");
        blocks.push(ParamBlock::new(weight, bias));
    }
    if !cur.bytes.is_empty() {
        return Err(CheckpointError::Trailing);
    }
    Ok(ParamSet::new(blocks))
}

/// Header only, without validating against a spec.
pub fn read_checkpoint_header(bytes: &[u8]) -> Result<CheckpointHeader, CheckpointError> {
    read_header(&mut Cursor { bytes })
}

pub fn write_checkpoint_file<T: Real>(path: &Path, spec: &ModelSpec, params: &ParamSet<T>) -> Result<(), CheckpointError> {
    std::fs::write(path, write_checkpoint(spec, params))?;
    Ok(())
}

pub fn read_checkpoint_file<T: Real>(path: &Path, spec: &ModelSpec) -> Result<ParamSet<T>, CheckpointError> {
    read_checkpoint(spec, &std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::{ConvSpec, TieMode};
    use crate::nn::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = ModelSpec::mlp(7, &[5, 3], 4, 0.1);
        let mut params = init_params::<f64>(&spec, 11).unwrap();
        params.blocks[0].bias[0] = -0.0;
        params.blocks[1].bias[2] = f64::MIN_POSITIVE / 4.0;
        let bytes = write_checkpoint(&spec, &params);
        let back: ParamSet<f64> = read_checkpoint(&spec, &bytes).unwrap();
        assert!(back.bit_eq(&params));
        assert_eq!(write_checkpoint(&spec, &back), bytes);
    }

    #[test]
    fn f32_round_trip_and_precision_guard() {
        let conv = ConvSpec::new(1, 4, 4, 2, (2, 2)).unwrap();
        let spec = ModelSpec::structured(conv, TieMode::Cnn, 3, 0.0);
        let params = init_params::<f32>(&spec, 2).unwrap();
        let bytes = write_checkpoint(&spec, &params);
        assert_eq!(read_checkpoint_header(&bytes).unwrap().precision, Precision::F32);
        assert!(read_checkpoint::<f32>(&spec, &bytes).unwrap().bit_eq(&params));
        assert!(matches!(
            read_checkpoint::<f64>(&spec, &bytes),
            Err(CheckpointError::Precision { .. })
        ));
    }

    #[test]
    fn rejects_foreign_spec_and_damage() {
        let spec = ModelSpec::logistic(3, 2);
        let params = init_params::<f64>(&spec, 1).unwrap();
        let bytes = write_checkpoint(&spec, &params);
        let other = ModelSpec::logistic(3, 2 + 1);
        assert!(matches!(read_checkpoint::<f64>(&other, &bytes), Err(CheckpointError::SpecMismatch)));
        assert!(matches!(
            read_checkpoint::<f64>(&spec, &bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated)
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint::<f64>(&spec, &bad), Err(CheckpointError::BadMagic)));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(read_checkpoint::<f64>(&spec, &long), Err(CheckpointError::Trailing)));
    }
}
