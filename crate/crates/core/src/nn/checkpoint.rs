//! Binary checkpoints:
//!
//! ```text
//! b"LGACKPT1" | u32 version | u32 header length | header JSON | values
//! ```
//!
//! The header records variant, seed, catalog hash, architecture and element
//! type. Values are little-endian: every parameter in `params_mut` order,
//! then every BN running buffer in `buffers_mut` order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, PolicyArch, PolicyNet, Real, Variant};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"LGACKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: Variant,
    pub seed: u64,
    pub catalog_hash: String,
    pub arch: PolicyArch,
    pub dtype: String,
    pub values: usize,
}

pub fn write_checkpoint<T: Real>(net: &mut PolicyNet<T>, seed: u64, catalog_hash: &str) -> Vec<u8> {
    let mut body = Vec::new();
    for p in net.params_mut() {
        p.value.iter().for_each(|v| v.to_le_bytes_vec(&mut body));
    }
    for b in net.buffers_mut() {
        b.iter().for_each(|v| v.to_le_bytes_vec(&mut body));
    }
    let meta = CheckpointMeta {
        variant: net.variant,
        seed,
        catalog_hash: catalog_hash.to_string(),
        arch: net.arch.clone(),
        dtype: T::NAME.to_string(),
        values: body.len() / T::BYTES,
    };
    let header = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + header.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&body);
    out
}

pub fn read_checkpoint<T: Real>(bytes: &[u8]) -> Result<(PolicyNet<T>, CheckpointMeta), NnError> {
    let err = |m: &str| NnError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(err("not a checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header = bytes.get(16..16 + hlen).ok_or_else(|| err("truncated header"))?;
    let meta: CheckpointMeta = serde_json::from_slice(header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if meta.dtype != T::NAME {
        return Err(NnError::Checkpoint(format!("checkpoint holds {}, expected {}", meta.dtype, T::NAME)));
    }
    let body = &bytes[16 + hlen..];
    if body.len() != meta.values * T::BYTES {
        return Err(err("value count does not match body length"));
    }
    let mut net = PolicyNet::<T>::with_arch(meta.variant, meta.arch.clone(), 0)?;
    let mut values = body.chunks_exact(T::BYTES).map(T::from_le_slice);
    let mut fill = |dst: &mut [T]| -> Result<(), NnError> {
        for d in dst {
            *d = values.next().ok_or_else(|| err("too few values"))?;
        }
        Ok(())
    };
    for p in net.params_mut() {
        fill(&mut p.value)?;
    }
    for b in net.buffers_mut() {
        fill(b)?;
    }
    if values.next().is_some() {
        return Err(err("too many values"));
    }
    Ok((net, meta))
}

pub fn save_checkpoint<T: Real>(path: &Path, net: &mut PolicyNet<T>, seed: u64, catalog_hash: &str) -> Result<(), NnError> {
    std::fs::write(path, write_checkpoint(net, seed, catalog_hash))
        .map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Loads a checkpoint, rejecting one written against a different catalog.
pub fn load_checkpoint<T: Real>(path: &Path, catalog_hash: &str) -> Result<(PolicyNet<T>, CheckpointMeta), NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    let (net, meta) = read_checkpoint(&bytes)?;
    if meta.catalog_hash != catalog_hash {
        return Err(NnError::Checkpoint("catalog hash mismatch".into()));
    }
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::nn::{PolicyInput, Tensor};

    #[test]
    fn round_trip_preserves_weights_and_stats() {
        let mut net = PolicyNet::<f32>::new(Variant::Gcbc, 5);
        let input = PolicyInput { images: vec![Tensor::zeros(&[2, 64, 64, 3])], text: Some(Tensor::zeros(&[2, 384])) };
        net.forward(&input, Mode::Train).unwrap();
        let bytes = write_checkpoint(&mut net, 5, "abc");
        let (mut back, meta) = read_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(meta.variant, Variant::Gcbc);
        assert_eq!(meta.seed, 5);
        assert_eq!(meta.catalog_hash, "abc");
        assert_eq!(write_checkpoint(&mut back, 5, "abc"), bytes);
        assert_eq!(back.predict(&input).unwrap(), net.predict(&input).unwrap());
    }

    #[test]
    fn rejects_corruption_and_wrong_dtype() {
        let mut net = PolicyNet::<f32>::new(Variant::Lga, 1);
        let bytes = write_checkpoint(&mut net, 1, "h");
        assert!(read_checkpoint::<f64>(&bytes).is_err());
        assert!(read_checkpoint::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f32>(&bad).is_err());
    }

    #[test]
    fn load_checks_catalog_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut net = PolicyNet::<f32>::new(Variant::Lga, 1);
        save_checkpoint(&path, &mut net, 1, "h1").unwrap();
        assert!(load_checkpoint::<f32>(&path, "h1").is_ok());
        assert!(load_checkpoint::<f32>(&path, "h2").is_err());
    }
}
