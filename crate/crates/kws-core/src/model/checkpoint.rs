//! Checkpoint container: magic "KWSC", version, JSON metadata, then named
//! little-endian f32 tensors. Load/save round trips are byte-stable.

use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KwtConfig;
use crate::tensor::{ParameterSet, Tensor};

const MAGIC: &[u8; 4] = b"KWSC";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("metadata error: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Provenance carried inside every checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: KwtConfig,
    pub seed: u64,
    /// Training method or stage tag, e.g. "d2v-denoising" or "baseline-clean".
    pub method: String,
    pub step: u64,
}

fn write_u32(out: &mut impl Write, v: u32) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn read_u32(input: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_exact_vec(input: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>, CheckpointError> {
    let mut buf = vec![0u8; len];
    input
        .read_exact(&mut buf)
        .map_err(|_| CheckpointError::Corrupt(format!("truncated {what}")))?;
    Ok(buf)
}

pub fn write_checkpoint(
    out: &mut impl Write,
    meta: &CheckpointMeta,
    params: &ParameterSet<f32>,
) -> Result<(), CheckpointError> {
    out.write_all(MAGIC)?;
    write_u32(out, VERSION)?;
    let meta_json = serde_json::to_vec(meta)?;
    write_u32(out, meta_json.len() as u32)?;
    out.write_all(&meta_json)?;
    write_u32(out, params.len() as u32)?;
    for (name, tensor) in params.iter() {
        write_u32(out, name.len() as u32)?;
        out.write_all(name.as_bytes())?;
        write_u32(out, tensor.shape().len() as u32)?;
        for &dim in tensor.shape() {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(
    input: &mut impl Read,
) -> Result<(CheckpointMeta, ParameterSet<f32>), CheckpointError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let meta_len = read_u32(input)? as usize;
    let meta_json = read_exact_vec(input, meta_len, "metadata")?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_json)?;

    let n_tensors = read_u32(input)? as usize;
    let mut params = ParameterSet::new();
    for _ in 0..n_tensors {
        let name_len = read_u32(input)? as usize;
        let name_bytes = read_exact_vec(input, name_len, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
        let ndim = read_u32(input)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let buf = read_exact_vec(input, 8, "shape")?;
            shape.push(u64::from_le_bytes(buf.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = read_exact_vec(input, numel * 4, &format!("data of '{name}'"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if params.contains(&name) {
            return Err(CheckpointError::Corrupt(format!("duplicate tensor '{name}'")));
        }
        let tensor = Tensor::param(shape, data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor '{name}': {e}")))?;
        params.insert(name, tensor);
    }
    Ok((meta, params))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    meta: &CheckpointMeta,
    params: &ParameterSet<f32>,
) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, meta, params)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(CheckpointMeta, ParameterSet<f32>), CheckpointError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}
