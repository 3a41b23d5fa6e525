//! Trainer checkpoints.
//!
//! Layout, little endian:
//!
//! ```text
//! magic "RGCKPT01" | version u32 | header length u64 | header JSON
//! parameters, then Adam first and second moments, each as f64 in store order
//! sha256 of everything above [32]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{Model, ModelSpec, Normalizer};
use super::train::{EpochLog, TrainConfig, Trainer};
use crate::body::skeleton::SkeletonDef;
use crate::body::Skeleton;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"RGCKPT01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    train: TrainConfig,
    skeleton: SkeletonDef,
    skeleton_hash: String,
    normalizer: Normalizer,
    epoch: usize,
    log: Vec<EpochLog>,
    adam: AdamConfig,
    adam_step: u64,
    params: Vec<TensorMeta>,
}

pub fn encode_checkpoint(trainer: &Trainer) -> Vec<u8> {
    let model = &trainer.model;
    let header = Header {
        spec: model.spec.clone(),
        train: trainer.config.clone(),
        skeleton: model.skeleton.to_def(),
        skeleton_hash: model.skeleton.hash(),
        normalizer: model.normalizer.clone(),
        epoch: trainer.epoch,
        log: trainer.log.clone(),
        adam: trainer.adam.config.clone(),
        adam_step: trainer.adam.step,
        params: model
            .store
            .iter()
            .map(|(name, t)| TensorMeta {
                name: name.to_string(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(CHECKPOINT_VERSION.to_le_bytes());
    out.extend((json.len() as u64).to_le_bytes());
    out.extend(&json);
    let groups = model
        .store
        .iter()
        .map(|(_, t)| t.data())
        .chain(trainer.adam.first.iter().map(Vec::as_slice))
        .chain(trainer.adam.second.iter().map(Vec::as_slice));
    for g in groups {
        for v in g {
            out.extend(v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend(digest.as_slice());
    out
}

fn truncated() -> Error {
    Error::CorruptFile("checkpoint truncated".into())
}

/// Decodes a checkpoint. With `expected` set, the stored skeleton must hash
/// to the same value.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&Skeleton>) -> Result<Trainer> {
    if bytes.len() < 20 {
        return Err(truncated());
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::CorruptFile("not a checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("eight bytes")) as usize;
    let body_start = 20usize.checked_add(header_len).ok_or_else(truncated)?;
    if bytes.len() < body_start + 32 {
        return Err(truncated());
    }
    let header: Header =
        serde_json::from_slice(&bytes[20..body_start]).map_err(|e| Error::CorruptFile(format!("checkpoint header: {e}")))?;
    let scalars: usize = header.params.iter().map(|m| m.rows * m.cols).sum();
    let end = body_start + 3 * 8 * scalars;
    if bytes.len() < end + 32 {
        return Err(truncated());
    }
    if bytes.len() > end + 32 {
        return Err(Error::CorruptFile("trailing bytes after checkpoint".into()));
    }
    if Sha256::digest(&bytes[..end]).as_slice() != &bytes[end..] {
        return Err(Error::CorruptFile("checkpoint checksum mismatch".into()));
    }

    let skeleton = Skeleton::from_def(&header.skeleton)?;
    if skeleton.hash() != header.skeleton_hash {
        return Err(Error::CorruptFile("stored skeleton does not match its hash".into()));
    }
    if let Some(exp) = expected {
        if exp.hash() != header.skeleton_hash {
            return Err(Error::SkeletonMismatch {
                expected: exp.hash(),
                got: header.skeleton_hash,
            });
        }
    }

    let mut floats = bytes[body_start..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
    let mut store = ParamStore::new();
    for m in &header.params {
        store.add(m.name.clone(), Tensor::from_vec(m.rows, m.cols, take(m.rows * m.cols)));
    }
    let first = header.params.iter().map(|m| take(m.rows * m.cols)).collect();
    let second = header.params.iter().map(|m| take(m.rows * m.cols)).collect();
    let model = Model::from_parts(header.spec, &skeleton, store, header.normalizer)?;
    Ok(Trainer {
        model,
        adam: Adam {
            config: header.adam,
            first,
            second,
            step: header.adam_step,
        },
        config: header.train,
        epoch: header.epoch,
        log: header.log,
    })
}

pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(trainer)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&Skeleton>) -> Result<Trainer> {
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?, expected)
}
