use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{ModelConfig, TinyDenoiser};
use crate::grammar::TokenTable;

const MAGIC: &[u8; 8] = b"SDCKPT01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint was written with an incompatible token table")]
    TokenTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub steps: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    tokens: Vec<String>,
    hyperparameters: ModelConfig,
    metadata: TrainingMeta,
    n_params: usize,
}

/// Serialized model: magic, little-endian `u32` header length, JSON header,
/// then the weights as little-endian `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tokens: Vec<String>,
    pub config: ModelConfig,
    pub params: Vec<f32>,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn from_model(model: &TinyDenoiser, meta: TrainingMeta) -> Self {
        Self {
            tokens: TokenTable::standard().tokens().to_vec(),
            config: model.config,
            params: model.params.iter().map(|&p| p as f32).collect(),
            meta,
        }
    }

    pub fn to_model(&self) -> Result<TinyDenoiser, CheckpointError> {
        TokenTable::from_tokens(&self.tokens).map_err(|_| CheckpointError::TokenTable)?;
        TinyDenoiser::from_params(self.config, self.params.iter().map(|&p| p as f64).collect())
            .map_err(|e| CheckpointError::Format(e.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let header = Header {
            format_version: FORMAT_VERSION,
            tokens: self.tokens.clone(),
            hyperparameters: self.config,
            metadata: self.meta,
            n_params: self.params.len(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < hlen {
            return Err(CheckpointError::Format("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(CheckpointError::Format(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let payload = &body[hlen..];
        if payload.len() != 4 * header.n_params {
            return Err(CheckpointError::Format(format!(
                "payload holds {} bytes, header promises {} weights",
                payload.len(),
                header.n_params
            )));
        }
        let params = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            tokens: header.tokens,
            config: header.hyperparameters,
            params,
            meta: header.metadata,
        })
    }

    /// Writes through a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        crate::io::write_atomic(path, &self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
