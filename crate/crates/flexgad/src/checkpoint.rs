//! Model checkpoints.
//!
//! Layout: `FGCK`, a u64 little-endian header length, a JSON header, then
//! every parameter tensor as row-major little-endian f64 in canonical order.

use std::io::Write;
use std::path::Path;

use flexgad_core::{Matrix, ModelConfig, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, IoError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub num_features: usize,
    pub seed: u64,
    pub tensors: Vec<TensorShape>,
}

pub fn encode(params: &ModelParams, cfg: &ModelConfig, num_features: usize) -> Result<Vec<u8>> {
    params.validate(num_features, cfg)?;
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        num_features,
        seed: cfg.seed,
        tensors: ModelParams::layout(num_features, cfg)
            .into_iter()
            .map(|(name, rows, cols)| TensorShape { name, rows, cols })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 8 * params.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in params.tensors() {
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let bad = |msg: String| IoError::format(path, msg);
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing FGCK header".into()));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let body_start = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(12))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad(format!("header length {len} exceeds file size")))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[12..body_start]).map_err(|e| IoError::json(path, e))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {}", header.version)));
    }
    header.config.validate()?;
    let expected: Vec<TensorShape> = ModelParams::layout(header.num_features, &header.config)
        .into_iter()
        .map(|(name, rows, cols)| TensorShape { name, rows, cols })
        .collect();
    if header.tensors != expected {
        return Err(bad("tensor list does not match the configured model".into()));
    }
    let mut blob = &bytes[body_start..];
    let mut tensors = Vec::with_capacity(expected.len());
    for t in &expected {
        let need = 8 * t.rows * t.cols;
        if blob.len() < need {
            return Err(bad(format!("truncated tensor {}", t.name)));
        }
        let data = blob[..need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Matrix::from_vec(t.rows, t.cols, data)?);
        blob = &blob[need..];
    }
    if !blob.is_empty() {
        return Err(bad(format!("{} trailing bytes", blob.len())));
    }
    let params = ModelParams::from_tensors(header.num_features, &header.config, tensors)?;
    params.validate(header.num_features, &header.config)?;
    Ok((header, params))
}

pub fn save(path: &Path, params: &ModelParams, cfg: &ModelConfig, num_features: usize) -> Result<()> {
    let bytes = encode(params, cfg, num_features)?;
    let mut f = std::fs::File::create(path).at(path)?;
    f.write_all(&bytes).at(path)?;
    f.sync_all().at(path)
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let bytes = std::fs::read(path).at(path)?;
    decode(&bytes, path)
}
