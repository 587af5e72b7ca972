//! Checkpoint file format.
//!
//! ```text
//! header length   u32 LE
//! header          JSON: config, counters, rng state, tensor directory
//! payload         concatenated f32 LE tensors at the directory's byte offsets
//! ```
//!
//! Parameters are held in f64 during training and rounded to f32 on export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::GanConfig;
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "ccgan-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Full training state: both networks (parameters and buffers), both
/// optimizers' moments, counters and the training RNG.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: GanConfig,
    pub epoch: usize,
    pub iter_d: u64,
    pub iter_g: u64,
    pub adam_t_g: u64,
    pub adam_t_d: u64,
    pub rng_state: (u64, u64),
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct DirEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    config: GanConfig,
    epoch: usize,
    iter_d: u64,
    iter_g: u64,
    adam_t_g: u64,
    adam_t_d: u64,
    rng_key: u64,
    rng_counter: u64,
    tensors: Vec<DirEntry>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut dir = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::invariant(format!("tensor {} does not match its shape", t.name)));
            }
            dir.push(DirEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
            });
            offset += 4 * t.data.len() as u64;
        }
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            config: self.config.clone(),
            epoch: self.epoch,
            iter_d: self.iter_d,
            iter_g: self.iter_g,
            adam_t_g: self.adam_t_g,
            adam_t_d: self.adam_t_d,
            rng_key: self.rng_state.0,
            rng_counter: self.rng_state.1,
            tensors: dir,
        };
        let json = serde_json::to_vec(&header)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::arg("checkpoint header exceeds 4 GiB"))?;
        let mut out = Vec::with_capacity(4 + json.len() + offset as usize);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let short = || Error::Format("checkpoint truncated".into());
        let len = u32::from_le_bytes(buf.get(..4).ok_or_else(short)?.try_into().unwrap()) as usize;
        let json = buf.get(4..4 + len).ok_or_else(short)?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint format {} v{}",
                header.format, header.version
            )));
        }
        let payload = &buf[4 + len..];
        let mut expected = 0u64;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            if e.offset != expected {
                return Err(Error::Format(format!("tensor {} at unexpected offset {}", e.name, e.offset)));
            }
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let bytes = payload.get(start..start + 4 * n).ok_or_else(short)?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            expected += 4 * n as u64;
            tensors.push(NamedTensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        if payload.len() as u64 != expected {
            return Err(Error::Format(format!(
                "checkpoint has {} trailing bytes",
                payload.len() as u64 - expected
            )));
        }
        Ok(Self {
            config: header.config,
            epoch: header.epoch,
            iter_d: header.iter_d,
            iter_g: header.iter_g,
            adam_t_g: header.adam_t_g,
            adam_t_d: header.adam_t_d,
            rng_state: (header.rng_key, header.rng_counter),
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf)
    }
}
