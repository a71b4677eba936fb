//! Flat model parameter vectors: the unit of exchange and aggregation.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed per-message header: round number plus dimension.
pub const WIRE_HEADER_BYTES: u64 = 16;
const CHECKPOINT_MAGIC: &[u8; 4] = b"PLXM";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("heterogeneous model dimensions")]
    DimensionMismatch,
    #[error("nothing to aggregate")]
    Empty,
    #[error("model dimension must be positive")]
    ZeroDim,
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// A flat `f64` parameter vector with a Gossip Learning age counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    values: Vec<f64>,
    age: u64,
}

impl ModelParameters {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        Self::with_age(values, 0)
    }

    pub fn with_age(values: Vec<f64>, age: u64) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::ZeroDim);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(ModelParameters { values, age })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "model dimension must be positive");
        ModelParameters {
            values: vec![0.0; dim],
            age: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn age(&self) -> u64 {
        self.age
    }

    pub fn set_age(&mut self, age: u64) {
        self.age = age;
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Bytes on the wire: 8 per parameter plus the fixed header.
    pub fn size_bytes(&self) -> u64 {
        model_size_bytes(self)
    }
}

pub fn model_size_bytes(model: &ModelParameters) -> u64 {
    8 * model.dim() as u64 + WIRE_HEADER_BYTES
}

/// Unweighted element-wise mean. The result is bit-identical under any
/// permutation of the input: each coordinate is summed in sorted order.
/// The output coordinate is clamped into the input range so rounding can
/// never push it outside `[min, max]`.
pub fn average_models(models: &[ModelParameters]) -> Result<ModelParameters, ModelError> {
    let first = models.first().ok_or(ModelError::Empty)?;
    let dim = first.dim();
    if models.iter().any(|m| m.dim() != dim) {
        return Err(ModelError::DimensionMismatch);
    }
    let count = models.len() as f64;
    let mut column = Vec::with_capacity(models.len());
    let mut out = Vec::with_capacity(dim);
    for c in 0..dim {
        column.clear();
        column.extend(models.iter().map(|m| m.values[c]));
        column.sort_by(f64::total_cmp);
        let sum: f64 = column.iter().sum();
        let lo = column[0];
        let hi = column[column.len() - 1];
        out.push((sum / count).clamp(lo, hi));
    }
    Ok(ModelParameters {
        values: out,
        age: 0,
    })
}

/// Encodes a checkpoint: `PLXM`, u32 dim, u64 age, then `dim` f64 values,
/// all little-endian.
pub fn encode_checkpoint(model: &ModelParameters) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 8 * model.dim());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&model.age.to_le_bytes());
    for v in &model.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParameters, ModelError> {
    if bytes.len() < 16 {
        return Err(ModelError::Checkpoint("truncated header".into()));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let age = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[16..];
    if body.len() != dim * 8 {
        return Err(ModelError::Checkpoint(format!(
            "expected {} payload bytes, found {}",
            dim * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelParameters::with_age(values, age)
}

pub fn write_checkpoint(path: &Path, model: &ModelParameters) -> Result<(), ModelError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_checkpoint(model))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParameters, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
