//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, u32 version, 32-byte SHA-256 of the body, then the
//! body — a length-prefixed JSON metadata blob followed by a manifest of
//! named tensors with raw little-endian f64 payloads.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::{Params, Tensor};
use crate::models::ModelConfig;

const MAGIC: &[u8; 8] = b"NL2SQLCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch: file is corrupt or truncated")]
    Checksum,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Everything needed to rebuild the model around the tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab: Vec<String>,
    pub target_vocab: Option<Vec<String>>,
    pub best_dev_acc_ex: f64,
    /// The training configuration the checkpoint was produced with, kept for
    /// provenance.
    pub train: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Params,
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.data.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let meta_json =
        serde_json::to_vec(&ckpt.meta).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let mut body = Vec::new();
    put_u64(&mut body, meta_json.len() as u64);
    body.extend_from_slice(&meta_json);
    put_u64(&mut body, ckpt.params.len() as u64);
    for (_, entry) in ckpt.params.iter() {
        put_u64(&mut body, entry.name.len() as u64);
        body.extend_from_slice(entry.name.as_bytes());
        body.push(u8::from(entry.trainable));
        put_u64(&mut body, entry.value.shape().len() as u64);
        for &d in entry.value.shape() {
            put_u64(&mut body, d as u64);
        }
        for &x in entry.value.data() {
            body.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&body);

    let mut out = Vec::with_capacity(8 + 4 + 32 + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&digest);
    out.extend_from_slice(&body);
    std::fs::write(path, out).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut file = std::fs::File::open(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut data = Vec::new();
    file.read_to_end(&mut data).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if data.len() < 44 || &data[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::Version { found: version, expected: VERSION });
    }
    let stored_digest = &data[12..44];
    let body = &data[44..];
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_digest {
        return Err(CheckpointError::Checksum);
    }

    let mut cur = Cursor { data: body, pos: 0 };
    let meta_len = cur.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(cur.take(meta_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("metadata: {}", e)))?;
    let n_tensors = cur.u64()? as usize;
    let mut params = Params::new();
    for _ in 0..n_tensors {
        let name_len = cur.u64()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor name: {}", e)))?
            .to_string();
        let trainable = cur.u8()? != 0;
        let ndims = cur.u64()? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(cur.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = cur.take(len * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::from_vec(&shape, values);
        if trainable {
            params.add(&name, tensor);
        } else {
            params.add_frozen(&name, tensor);
        }
    }
    if cur.pos != body.len() {
        return Err(CheckpointError::Corrupt("trailing bytes after tensors".into()));
    }
    Ok(Checkpoint { meta, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = Params::new();
        params.add("w", Tensor::uniform(&[3, 2], -1.0, 1.0, &mut rng));
        params.add_frozen("emb", Tensor::uniform(&[4], -1.0, 1.0, &mut rng));
        Checkpoint {
            meta: CheckpointMeta {
                model: ModelConfig { kind: ModelKind::Seq2sql, ..Default::default() },
                vocab: vec!["<unk>".into(), "a".into()],
                target_vocab: None,
                best_dev_acc_ex: 0.75,
                train: serde_json::json!({"lr": 1e-3}),
            },
            params,
        }
    }

    #[test]
    fn save_load_round_trip_preserves_exact_bits() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.meta.best_dev_acc_ex, 0.75);
        assert_eq!(loaded.meta.vocab, ckpt.meta.vocab);
        assert_eq!(loaded.params.len(), ckpt.params.len());
        for (id, entry) in ckpt.params.iter() {
            let other = loaded.params.id_of(&entry.name).unwrap();
            assert_eq!(loaded.params.value(other), ckpt.params.value(id));
            assert_eq!(loaded.params.entry(other).trainable, entry.trainable);
        }
    }

    #[test]
    fn truncated_file_fails_the_checksum() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let data = std::fs::read(&path).unwrap();
        std::fs::write(&path, &data[..data.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Checksum)));
    }

    #[test]
    fn corrupted_payload_fails_the_checksum() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        let last = data.len() - 1;
        data[last] ^= 0xFF;
        std::fs::write(&path, &data).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Checksum)));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        data[8..12].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &data).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Version { found: 99, expected: 1 })
        ));
    }

    #[test]
    fn non_checkpoint_file_is_rejected_by_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::BadMagic)));
    }
}
