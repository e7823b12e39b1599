//! SOMF checkpoint files: magic, version, JSON header, little-endian blobs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{OptimizerState, ScheduleState};
use super::{EvalRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::network::{Network, NetworkConfig, Parameters};
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"SOMF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub network: NetworkConfig,
    /// Includes batch-norm running statistics.
    pub params: Parameters<T>,
    pub optimizer: Option<OptimizerState<T>>,
    pub history: Vec<EvalRecord>,
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    Momentum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    group: Group,
    shape: Vec<usize>,
    dtype: DType,
    offset: u64,
    bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    network: NetworkConfig,
    seed: u64,
    train_config: Option<TrainConfig>,
    history: Vec<EvalRecord>,
    optimizer: Option<ScheduleState>,
    tensors: Vec<ManifestEntry>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Rebuilds the network and checks the stored parameters against it.
    pub fn network(&self) -> Result<Network> {
        let net = Network::new(self.network.clone())?;
        net.check_params(&self.params)?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blobs = Vec::new();
        let mut tensors = Vec::new();
        let mut push = |group, name: &str, t: &Tensor<T>| {
            let offset = blobs.len() as u64;
            for &v in t.data() {
                v.write_le(&mut blobs);
            }
            tensors.push(ManifestEntry {
                name: name.to_string(),
                group,
                shape: t.shape().to_vec(),
                dtype: T::DTYPE,
                offset,
                bytes: blobs.len() as u64 - offset,
            });
        };
        for (name, t) in self.params.iter() {
            push(Group::Param, name, t);
        }
        if let Some(opt) = &self.optimizer {
            for (name, t) in opt.velocity.iter() {
                push(Group::Momentum, name, t);
            }
        }
        let header = Header {
            network: self.network.clone(),
            seed: self.seed,
            train_config: self.train_config.clone(),
            history: self.history.clone(),
            optimizer: self.optimizer.as_ref().map(OptimizerState::schedule),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + blobs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blobs);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a SOMF checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let body = &bytes[16..];
        let header_len = usize::try_from(header_len)
            .ok()
            .filter(|&n| n <= body.len())
            .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let blobs = &body[header_len..];

        let mut params = Parameters::new();
        let mut velocity = Parameters::new();
        let mut expected_offset = 0u64;
        let width = T::DTYPE.size() as u64;
        for e in &header.tensors {
            if e.dtype != T::DTYPE {
                return Err(Error::Format(format!(
                    "tensor `{}` stored as {:?}, requested {:?}",
                    e.name,
                    e.dtype,
                    T::DTYPE
                )));
            }
            let count: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.bytes != count as u64 * width {
                return Err(Error::Format(format!(
                    "inconsistent manifest entry `{}`",
                    e.name
                )));
            }
            let end = e.offset + e.bytes;
            if end > blobs.len() as u64 {
                return Err(Error::Format(format!(
                    "truncated checkpoint: `{}` needs bytes up to {end}, file has {}",
                    e.name,
                    blobs.len()
                )));
            }
            let raw = &blobs[e.offset as usize..end as usize];
            let data = raw.chunks_exact(width as usize).map(T::read_le).collect();
            let t = Tensor::from_vec(&e.shape, data)?;
            match e.group {
                Group::Param => params.insert(e.name.clone(), t),
                Group::Momentum => velocity.insert(e.name.clone(), t),
            }
            expected_offset = end;
        }
        if expected_offset != blobs.len() as u64 {
            return Err(Error::Format("trailing bytes after the last tensor".into()));
        }
        let optimizer = header
            .optimizer
            .map(|s| OptimizerState::from_parts(velocity, s));
        Ok(Checkpoint {
            network: header.network,
            params,
            optimizer,
            history: header.history,
            seed: header.seed,
            train_config: header.train_config,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(path: &Path, checkpoint: &Checkpoint<T>) -> Result<()> {
    let bytes = checkpoint.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
