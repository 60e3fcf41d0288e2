//! Checkpoints: every named parameter and buffer, the Adam moments, and the
//! position of the data stream, in the shared binary container.

use std::path::Path;

use higita_core::model::{HiGita, ModelConfig};
use higita_core::nn::ParamStore;
use higita_core::optim::{Adam, AdamConfig};
use higita_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::container::{self, ContainerError};

pub const MAGIC: &[u8; 8] = b"HIGITACK";
pub const VERSION: u32 = 1;

pub type CheckpointError = ContainerError;

/// Where training stands. Batch order is a pure function of
/// `(seed, epoch)`, so these four numbers are the complete data RNG state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub seed: u64,
    pub epoch: u64,
    /// Index of the next batch within `epoch`.
    pub batch: u64,
    /// Optimizer steps taken.
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Param,
    Buffer,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    role: Role,
    shape: Vec<usize>,
    dtype: String,
    /// Offset into the data section, in values.
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    adam: AdamConfig,
    adam_steps: u64,
    progress: Progress,
    tensors: Vec<TensorEntry>,
    data_sha256: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: HiGita,
    pub store: ParamStore,
    pub adam: Adam,
    pub progress: Progress,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        let mut push = |name: &str, role: Role, t: &Tensor| {
            tensors.push(TensorEntry {
                name: name.to_string(),
                role,
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
                offset: data.len(),
                len: t.numel(),
            });
            data.extend_from_slice(t.data());
        };
        for id in self.store.ids() {
            let role = if self.store.is_trainable(id) {
                Role::Param
            } else {
                Role::Buffer
            };
            push(self.store.name(id), role, self.store.get(id));
        }
        for (moments, role) in [(&self.adam.m, Role::AdamM), (&self.adam.v, Role::AdamV)] {
            for (i, t) in moments.iter().enumerate() {
                if let Some(t) = t {
                    push(self.store.name(higita_core::nn::ParamId(i)), role, t);
                }
            }
        }
        let header = Header {
            model: self.model.config.clone(),
            adam: self.adam.config,
            adam_steps: self.adam.t,
            progress: self.progress,
            tensors,
            data_sha256: container::checksum(&data),
        };
        let json = serde_json::to_vec_pretty(&header).expect("header serializes");
        container::encode(MAGIC, VERSION, &json, &data)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ContainerError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| ContainerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(path, &bytes)
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self, CheckpointError> {
        let corrupt = |r: String| ContainerError::corrupt(path, r);
        let (header, data) = container::decode(path, bytes, MAGIC, VERSION)?;
        let header: Header =
            serde_json::from_slice(&header).map_err(|e| corrupt(format!("header: {e}")))?;
        if container::checksum(&data) != header.data_sha256 {
            return Err(corrupt("data checksum mismatch".into()));
        }
        let (model, mut store) =
            HiGita::new(&header.model, 0).map_err(|e| corrupt(format!("model config: {e}")))?;
        let mut adam = Adam::new(header.adam);
        adam.t = header.adam_steps;
        adam.m.resize(store.len(), None);
        adam.v.resize(store.len(), None);
        let mut loaded = vec![false; store.len()];
        for e in &header.tensors {
            let id = store
                .find(&e.name)
                .ok_or_else(|| corrupt(format!("unknown tensor {}", e.name)))?;
            let expected = store.get(id).shape().to_vec();
            if e.dtype != "f64" || e.shape != expected || e.len != e.shape.iter().product::<usize>()
            {
                return Err(corrupt(format!(
                    "tensor {} has wrong dtype or shape",
                    e.name
                )));
            }
            let values = e
                .offset
                .checked_add(e.len)
                .and_then(|end| data.get(e.offset..end))
                .ok_or_else(|| corrupt(format!("tensor {} lies outside the data", e.name)))?;
            let t = Tensor::new(&e.shape, values.to_vec());
            match e.role {
                Role::Param | Role::Buffer => {
                    if (e.role == Role::Param) != store.is_trainable(id) || loaded[id.0] {
                        return Err(corrupt(format!(
                            "tensor {} listed with the wrong role",
                            e.name
                        )));
                    }
                    store.set(id, t);
                    loaded[id.0] = true;
                }
                Role::AdamM => adam.m[id.0] = Some(t),
                Role::AdamV => adam.v[id.0] = Some(t),
            }
        }
        if let Some(i) = loaded.iter().position(|l| !l) {
            return Err(corrupt(format!(
                "tensor {} missing",
                store.name(higita_core::nn::ParamId(i))
            )));
        }
        Ok(Self {
            model,
            store,
            adam,
            progress: header.progress,
        })
    }
}
