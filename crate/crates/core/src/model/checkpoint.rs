//! Binary weight checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "GAITNET\0"
//! version      u32      CHECKPOINT_VERSION
//! config       u32 length + UTF-8 JSON of the ModelConfig
//! normalization u8 flag; if 1: u32 n, n f64 means, n f64 deviations
//! manifest     u32 entries; per entry: u8 layer kind, u32 detail,
//!              u32 tensor count, per tensor: u8 rank + rank x u32 dims
//! values       u64 count, then raw f64 per parameter tensor in manifest order
//! ```
//!
//! `detail` is the activation code for activation layers, the pool size for
//! max-pooling and the branch count for the concatenate marker.

use std::fs;
use std::io::{self, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::{ModelConfig, Network};
use crate::autodiff::LayerKind;
use crate::windowing::Normalization;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GAITNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("checkpoint format version {found}, expected {CHECKPOINT_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("checkpoint does not match the model configuration: {0}")]
    ManifestMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub kind: LayerKind,
    pub detail: u32,
    pub shapes: Vec<Vec<usize>>,
}

/// A loaded checkpoint: the configuration it was trained with, the input
/// normalization (if any) and the weights.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub normalization: Option<Normalization>,
}

pub fn save_params(
    network: &Network,
    normalization: Option<&Normalization>,
    path: &Path,
) -> Result<(), CheckpointError> {
    let bytes = encode(network, normalization);
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn encode(network: &Network, normalization: Option<&Normalization>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    // Writes into a Vec cannot fail.
    let w = &mut out;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION).unwrap();
    let config = serde_json::to_vec(network.config()).expect("config serializes");
    w.write_u32::<LittleEndian>(config.len() as u32).unwrap();
    w.write_all(&config).unwrap();
    match normalization {
        Some(n) => {
            w.write_u8(1).unwrap();
            w.write_u32::<LittleEndian>(n.mean.len() as u32).unwrap();
            for v in n.mean.iter().chain(&n.std) {
                w.write_f64::<LittleEndian>(*v).unwrap();
            }
        }
        None => w.write_u8(0).unwrap(),
    }
    let manifest = network.manifest();
    w.write_u32::<LittleEndian>(manifest.len() as u32).unwrap();
    for entry in &manifest {
        w.write_u8(entry.kind as u8).unwrap();
        w.write_u32::<LittleEndian>(entry.detail).unwrap();
        w.write_u32::<LittleEndian>(entry.shapes.len() as u32)
            .unwrap();
        for shape in &entry.shapes {
            w.write_u8(shape.len() as u8).unwrap();
            for d in shape {
                w.write_u32::<LittleEndian>(*d as u32).unwrap();
            }
        }
    }
    w.write_u64::<LittleEndian>(network.param_count() as u64)
        .unwrap();
    for p in network.params() {
        for v in p.data() {
            w.write_f64::<LittleEndian>(*v).unwrap();
        }
    }
    out
}

fn corrupt(e: io::Error) -> CheckpointError {
    CheckpointError::CorruptFile(format!("truncated or unreadable ({e})"))
}

/// Reads a checkpoint, rebuilding the network from its embedded
/// configuration and checking the layer manifest against it.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::CorruptFile("bad magic bytes".to_string()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(corrupt)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let config_len = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    if config_len > bytes.len() {
        return Err(CheckpointError::CorruptFile(
            "config length out of range".to_string(),
        ));
    }
    let mut config = vec![0u8; config_len];
    r.read_exact(&mut config).map_err(corrupt)?;
    let config: ModelConfig = serde_json::from_slice(&config)
        .map_err(|e| CheckpointError::CorruptFile(format!("bad model config: {e}")))?;

    let normalization = match r.read_u8().map_err(corrupt)? {
        0 => None,
        1 => {
            let n = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
            if n * 16 > bytes.len() {
                return Err(CheckpointError::CorruptFile(
                    "normalization length".to_string(),
                ));
            }
            let mut values = vec![0.0; 2 * n];
            r.read_f64_into::<LittleEndian>(&mut values)
                .map_err(corrupt)?;
            let std = values.split_off(n);
            Some(Normalization { mean: values, std })
        }
        flag => {
            return Err(CheckpointError::CorruptFile(format!(
                "bad normalization flag {flag}"
            )))
        }
    };

    let entries = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    if entries > bytes.len() {
        return Err(CheckpointError::CorruptFile("manifest length".to_string()));
    }
    let mut manifest = Vec::with_capacity(entries);
    for _ in 0..entries {
        let code = r.read_u8().map_err(corrupt)?;
        let kind = LayerKind::from_code(code)
            .ok_or_else(|| CheckpointError::CorruptFile(format!("unknown layer kind {code}")))?;
        let detail = r.read_u32::<LittleEndian>().map_err(corrupt)?;
        let tensors = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
        if tensors > 2 {
            return Err(CheckpointError::CorruptFile(
                "too many tensors in layer".to_string(),
            ));
        }
        let mut shapes = Vec::with_capacity(tensors);
        for _ in 0..tensors {
            let rank = r.read_u8().map_err(corrupt)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.read_u32::<LittleEndian>().map_err(corrupt)? as usize);
            }
            shapes.push(shape);
        }
        manifest.push(ManifestEntry {
            kind,
            detail,
            shapes,
        });
    }

    let mut network = Network::zeroed(config)
        .map_err(|e| CheckpointError::CorruptFile(format!("invalid model config: {e}")))?;
    let expected = network.manifest();
    if manifest != expected {
        let at = manifest
            .iter()
            .zip(&expected)
            .position(|(a, b)| a != b)
            .unwrap_or(manifest.len().min(expected.len()));
        return Err(CheckpointError::ManifestMismatch(format!(
            "layer manifest differs from the embedded config at entry {at}"
        )));
    }
    let count = r.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
    if count != network.param_count() {
        return Err(CheckpointError::CorruptFile(format!(
            "{count} values for {} parameters",
            network.param_count()
        )));
    }
    for p in network.params_mut() {
        r.read_f64_into::<LittleEndian>(p.data_mut())
            .map_err(corrupt)?;
    }
    if (r.position() as usize) != bytes.len() {
        return Err(CheckpointError::CorruptFile("trailing bytes".to_string()));
    }
    if network
        .params()
        .iter()
        .any(|p| p.ensure_finite("checkpoint").is_err())
    {
        return Err(CheckpointError::CorruptFile(
            "non-finite parameter".to_string(),
        ));
    }
    Ok(Checkpoint {
        network,
        normalization,
    })
}

/// Loads a checkpoint that must have been produced for `expected`.
pub fn load_params(path: &Path, expected: &ModelConfig) -> Result<Checkpoint, CheckpointError> {
    let checkpoint = read_checkpoint(path)?;
    let found = checkpoint.network.config();
    if found != expected {
        let what = if found.task != expected.task {
            format!("task is {}, expected {}", found.task, expected.task)
        } else if found.channels != expected.channels {
            format!(
                "{} input channels, expected {}",
                found.channels.len(),
                expected.channels.len()
            )
        } else if found.window_len != expected.window_len {
            format!(
                "window length {}, expected {}",
                found.window_len, expected.window_len
            )
        } else {
            "dropout rates differ".to_string()
        };
        return Err(CheckpointError::ManifestMismatch(what));
    }
    Ok(checkpoint)
}
