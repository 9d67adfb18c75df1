//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SCKP" | u32 format version | u32 metadata length | metadata JSON
//!        | every tensor as f64, in ModelParams::all_tensors order
//! ```
//!
//! Tensor order: `gru.w_r, gru.w_u, gru.w_c, gru.u_r, gru.u_u, gru.u_c,
//! gru.b_r, gru.b_u, gru.b_c`, then (with batch-norm) `bn.gamma, bn.beta,
//! bn.running_mean, bn.running_var`, then `head.w, head.b`. Matrices are
//! row-major. The metadata lists the names and lengths for cross-checking.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{BatchNormParams, Dims, ModelParams};
use crate::corpus::Accent;
use crate::error::{Error, Result};
use crate::features::FeatureKind;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub toolkit_version: String,
    pub dims: Dims,
    pub class_set: Vec<Accent>,
    pub frontend: FeatureKind,
    pub batchnorm: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn_epsilon: Option<f64>,
    /// Epoch the weights come from; `None` for an untrained model.
    #[serde(default)]
    pub epoch: Option<usize>,
    #[serde(default)]
    pub dev_loss: Option<f64>,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, class_set: Vec<Accent>, frontend: FeatureKind, seed: u64) -> Result<Self> {
        if class_set.len() != params.dims.n_classes {
            return Err(Error::Shape(format!(
                "{} classes in class set, head has {}",
                class_set.len(),
                params.dims.n_classes
            )));
        }
        let meta = CheckpointMeta {
            toolkit_version: crate::VERSION.to_string(),
            dims: params.dims,
            class_set,
            frontend,
            batchnorm: params.bn.is_some(),
            seed,
            bn_momentum: params.bn.as_ref().map(|b| b.momentum),
            bn_epsilon: params.bn.as_ref().map(|b| b.epsilon),
            epoch: None,
            dev_loss: None,
            tensors: params
                .all_tensors()
                .iter()
                .map(|(n, t)| TensorInfo {
                    name: n.to_string(),
                    len: t.len(),
                })
                .collect(),
        };
        Ok(Self { meta, params })
    }

    pub fn encode(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.all_tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing SCKP magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let meta_end = 12usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint metadata".into()))?;
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[12..meta_end])
            .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;

        let mut params = ModelParams::zeros(meta.dims, meta.batchnorm);
        if let Some(bn) = params.bn.as_mut() {
            *bn = BatchNormParams {
                momentum: meta.bn_momentum.unwrap_or(bn.momentum),
                epsilon: meta.bn_epsilon.unwrap_or(bn.epsilon),
                ..bn.clone()
            };
        }
        let mut payload = &bytes[meta_end..];
        {
            let tensors = params.all_tensors_mut();
            if tensors.len() != meta.tensors.len() {
                return Err(Error::Format("tensor list does not match model layout".into()));
            }
            for ((name, t), info) in tensors.into_iter().zip(&meta.tensors) {
                if name != info.name || t.len() != info.len {
                    return Err(Error::Format(format!(
                        "tensor {} ({}) does not match expected {name} ({})",
                        info.name,
                        info.len,
                        t.len()
                    )));
                }
                if payload.len() < 8 * t.len() {
                    return Err(Error::Format(format!("payload truncated in {name}")));
                }
                for (v, chunk) in t.iter_mut().zip(payload.chunks_exact(8)) {
                    *v = f64::from_le_bytes(chunk.try_into().unwrap());
                }
                payload = &payload[8 * t.len()..];
            }
        }
        if !payload.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", payload.len())));
        }
        params.check().map_err(|e| Error::Format(e.to_string()))?;
        if meta.class_set.len() != meta.dims.n_classes {
            return Err(Error::Format("class set size differs from head size".into()));
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
