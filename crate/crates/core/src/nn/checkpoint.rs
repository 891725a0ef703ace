//! Versioned checkpoint container.
//!
//! Layout: `RDCP` magic, u32 format version, u64 manifest length, a JSON
//! manifest (config, tensor names, shapes, element offsets), then raw
//! little-endian 32-bit float tensor data in manifest order. Clean,
//! backdoored, and fine-tuned models all use the same container; classifier
//! checkpoints carry extra head tensors and head metadata.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::params::EncoderParams;
use super::tensor::Mat;
use super::EncoderConfig;

const MAGIC: &[u8; 4] = b"RDCP";
const FORMAT_VERSION: u32 = 1;

/// Checkpoint-level metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// "encoder" or "classifier".
    pub kind: String,
    pub config: EncoderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    #[serde(flatten)]
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset into the data section.
    offset: u64,
    /// Element count.
    len: u64,
}

/// Serialize a checkpoint to bytes.
pub fn checkpoint_bytes(meta: &CheckpointMeta, tensors: &[(String, Vec<usize>, &[f64])]) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, shape, data) in tensors {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::format(format!("tensor {name}: shape/data mismatch")));
        }
        entries.push(TensorEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
            len: data.len() as u64,
        });
        offset += data.len() as u64;
    }
    let manifest = Manifest { format_version: FORMAT_VERSION, meta: meta.clone(), tensors: entries };
    let manifest_json = serde_json::to_vec(&manifest).map_err(|e| Error::format(e.to_string()))?;

    let mut out = Vec::with_capacity(16 + manifest_json.len() + offset as usize * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    for (_, _, data) in tensors {
        for &v in *data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Write a checkpoint file.
pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, tensors: &[(String, Vec<usize>, &[f64])]) -> Result<()> {
    let bytes = checkpoint_bytes(meta, tensors)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// A parsed checkpoint: metadata plus named tensors (widened to f64).
#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub meta: CheckpointMeta,
    tensors: HashMap<String, (Vec<usize>, Vec<f64>)>,
}

impl LoadedCheckpoint {
    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.tensors
            .get(name)
            .map(|(s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| Error::format(format!("checkpoint missing tensor {name}")))
    }

    pub fn has_tensor(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn tensor_mat(&self, name: &str) -> Result<Mat> {
        let (shape, data) = self.tensor(name)?;
        if shape.len() != 2 {
            return Err(Error::format(format!("tensor {name} is not a matrix")));
        }
        Ok(Mat::from_vec(shape[0], shape[1], data.to_vec()))
    }
}

/// Read and parse a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let mut f = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::format(format!("{}: not a checkpoint file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + mlen {
        return Err(Error::format(format!("{}: truncated manifest", path.display())));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[16..16 + mlen])
        .map_err(|e| Error::format(format!("{}: bad manifest: {e}", path.display())))?;
    let data = &bytes[16 + mlen..];

    let mut tensors = HashMap::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let start = entry.offset as usize * 4;
        let end = start + entry.len as usize * 4;
        if end > data.len() {
            return Err(Error::format(format!(
                "{}: tensor {} out of bounds",
                path.display(),
                entry.name
            )));
        }
        let mut values = Vec::with_capacity(entry.len as usize);
        for chunk in data[start..end].chunks_exact(4) {
            values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        tensors.insert(entry.name.clone(), (entry.shape.clone(), values));
    }
    Ok(LoadedCheckpoint { meta: manifest.meta, tensors })
}

/// Save an encoder checkpoint, optionally with the masked-LM output bias.
pub fn save_encoder(path: &Path, params: &EncoderParams, mlm_bias: Option<&[f64]>) -> Result<()> {
    let meta = CheckpointMeta {
        kind: "encoder".into(),
        config: params.config,
        head_kind: None,
        labels: None,
    };
    let mut tensors: Vec<(String, Vec<usize>, &[f64])> =
        params.tensors().into_iter().map(|(n, d, s)| (n, s, d)).collect();
    if let Some(bias) = mlm_bias {
        tensors.push(("mlm_bias".into(), vec![bias.len()], bias));
    }
    save_checkpoint(path, &meta, &tensors)
}

/// Rebuild encoder parameters from a loaded checkpoint (works for both
/// encoder and classifier checkpoints).
pub fn encoder_from_checkpoint(ckpt: &LoadedCheckpoint) -> Result<EncoderParams> {
    let config = ckpt.meta.config;
    config.validate()?;
    let mut params = EncoderParams::zeros(config);
    for (name, data) in params.tensors_mut() {
        let (_, src) = ckpt.tensor(&name)?;
        if src.len() != data.len() {
            return Err(Error::format(format!("tensor {name}: unexpected length")));
        }
        data.copy_from_slice(src);
    }
    Ok(params)
}

/// Load encoder parameters plus the masked-LM bias if present.
pub fn load_encoder(path: &Path) -> Result<(EncoderParams, Option<Vec<f64>>)> {
    let ckpt = load_checkpoint(path)?;
    let params = encoder_from_checkpoint(&ckpt)?;
    let bias = if ckpt.has_tensor("mlm_bias") {
        Some(ckpt.tensor("mlm_bias")?.1.to_vec())
    } else {
        None
    };
    Ok((params, bias))
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a file.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Content hash of encoder tensors: names and f32 data in fixed order.
/// Two parameter sets hash equal iff their checkpoint bytes would.
pub fn encoder_hash(params: &EncoderParams) -> String {
    let mut hasher = Sha256::new();
    for (name, data, _) in params.tensors() {
        hasher.update(name.as_bytes());
        for &v in data {
            hasher.update((v as f32).to_le_bytes());
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
