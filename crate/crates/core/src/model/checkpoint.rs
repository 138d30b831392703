//! Checkpoint files: one JSON header line, then every tensor as
//! little-endian `f32` in header order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{tensor_layout, ModelParams, Vocab, Weights};
use super::tensor::Tensor;
use super::ModelError;

pub const CHECKPOINT_FORMAT: &str = "sdoh-eventkit-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    inventory: String,
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
}

pub fn checkpoint_bytes(params: &ModelParams) -> Vec<u8> {
    let inv = params.inventory();
    let layout = tensor_layout(&params.config, &inv, params.vocab.len());
    let header = Header {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        inventory: inv.fingerprint(),
        vocab: params.vocab.tokens().to_vec(),
        tensors: layout
            .into_iter()
            .map(|(name, (r, c))| TensorEntry { name, shape: [r, c] })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for t in params.weights.tensors() {
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), ModelError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&checkpoint_bytes(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, ModelError> {
    read_checkpoint(std::fs::File::open(path)?)
}

pub fn read_checkpoint(r: impl Read) -> Result<ModelParams, ModelError> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: Header =
        serde_json::from_slice(&line).map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("format: unexpected {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "version: expected {CHECKPOINT_VERSION}, found {}",
            header.version
        )));
    }
    header.config.validate()?;
    let inv = header.config.inventory();
    if header.inventory != inv.fingerprint() {
        return Err(ModelError::Checkpoint("inventory: label inventory fingerprint differs".into()));
    }
    let layout = tensor_layout(&header.config, &inv, header.vocab.len());
    if layout.len() != header.tensors.len() {
        return Err(ModelError::Checkpoint(format!(
            "tensors: expected {} entries, found {}",
            layout.len(),
            header.tensors.len()
        )));
    }
    let mut tensors = Vec::with_capacity(layout.len());
    for ((name, (rows, cols)), entry) in layout.into_iter().zip(&header.tensors) {
        if entry.name != name {
            return Err(ModelError::Checkpoint(format!("tensors: expected {name}, found {}", entry.name)));
        }
        for (field, expected, found) in [("rows", rows, entry.shape[0]), ("cols", cols, entry.shape[1])] {
            if expected != found {
                return Err(ModelError::DimensionMismatch { field: format!("{name} {field}"), expected, found });
            }
        }
        let mut buf = vec![0u8; 4 * rows * cols];
        r.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ModelError::Checkpoint("unexpected end of tensor data".into()),
            _ => ModelError::Io(e),
        })?;
        let data = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor::from_vec(rows, cols, data));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes after tensor data".into()));
    }
    let weights = Weights::from_tensors(tensors);
    if !weights.is_finite() {
        return Err(ModelError::Checkpoint("non-finite parameter values".into()));
    }
    Ok(ModelParams::new(header.config, Vocab::from_list(header.vocab), weights))
}

/// Checks that a loaded model can run under `expected`.
pub fn check_config(params: &ModelParams, expected: &ModelConfig) -> Result<(), ModelError> {
    let c = &params.config;
    for (field, e, f) in [
        ("hidden_dim", expected.hidden_dim, c.hidden_dim),
        ("width_embedding_dim", expected.width_embedding_dim, c.width_embedding_dim),
        ("max_span_width", expected.max_span_width, c.max_span_width),
    ] {
        if e != f {
            return Err(ModelError::DimensionMismatch { field: field.into(), expected: e, found: f });
        }
    }
    if expected.include_method != c.include_method {
        return Err(ModelError::InventoryMismatch(format!(
            "checkpoint include_method={}, config include_method={}",
            c.include_method, expected.include_method
        )));
    }
    Ok(())
}
