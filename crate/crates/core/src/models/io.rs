//! Binary model container with a JSON sidecar.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "SQADVNET"
//! version      u32
//! arch tag     u32      1 = vanilla RNN, 2 = LSTM classifier
//! shape count  u32
//! shape        u64 × shape count
//! payload len  u64      number of f64 values
//! payload      f64 × payload len
//! ```
//!
//! Vanilla RNN shape: `[input_dim, hidden_dim, output_dim, activation]`.
//! LSTM classifier shape: `[vocab_size, embed_dim, hidden_dim]`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HiddenActivation, LstmClassifierParams, Model, VanillaRnnParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SQADVNET";
pub const FORMAT_VERSION: u32 = 1;

const TAG_VANILLA: u32 = 1;
const TAG_LSTM: u32 = 2;
const MAX_SHAPE_ENTRIES: u32 = 16;

/// Human-readable description stored next to the binary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub architecture: String,
    pub format_version: u32,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub training: serde_json::Value,
}

impl ModelMetadata {
    pub fn describe(model: &Model, seed: u64, training: serde_json::Value) -> Self {
        let (_, dims) = header_of(model);
        ModelMetadata {
            architecture: model.kind().to_string(),
            format_version: FORMAT_VERSION,
            dims: dims.iter().map(|&d| d as usize).collect(),
            vocab_size: match model {
                Model::Classifier(p) => Some(p.vocab_size()),
                Model::Sequential(_) => None,
            },
            seed,
            training,
        }
    }
}

fn header_of(model: &Model) -> (u32, Vec<u64>) {
    match model {
        Model::Sequential(p) => (
            TAG_VANILLA,
            vec![
                p.input_dim() as u64,
                p.hidden_dim() as u64,
                p.output_dim() as u64,
                p.activation.code(),
            ],
        ),
        Model::Classifier(p) => (
            TAG_LSTM,
            vec![p.vocab_size() as u64, p.embed_dim() as u64, p.hidden_dim() as u64],
        ),
    }
}

pub fn write_model<W: Write>(mut w: W, model: &Model) -> Result<()> {
    let (tag, shape) = header_of(model);
    let payload = match model {
        Model::Sequential(p) => p.to_flat(),
        Model::Classifier(p) => p.to_flat(),
    };
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&tag.to_le_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for d in &shape {
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&(payload.len() as u64).to_le_bytes())?;
    for v in &payload {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r, what)?))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r, what)?))
}

fn dim(v: u64) -> Result<usize> {
    usize::try_from(v)
        .ok()
        .filter(|&d| d > 0 && d <= 1 << 24)
        .ok_or_else(|| Error::Format(format!("implausible dimension {v}")))
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let magic: [u8; 8] = read_array(&mut r, "magic bytes")?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model file (bad magic bytes)".into()));
    }
    let version = read_u32(&mut r, "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let tag = read_u32(&mut r, "architecture tag")?;
    let count = read_u32(&mut r, "shape header")?;
    if count > MAX_SHAPE_ENTRIES {
        return Err(Error::Format(format!("shape header claims {count} entries")));
    }
    let shape = (0..count)
        .map(|_| read_u64(&mut r, "shape header"))
        .collect::<Result<Vec<_>>>()?;
    let len = read_u64(&mut r, "payload length")?;

    let expected = match (tag, shape.as_slice()) {
        (TAG_VANILLA, &[i, h, o, _]) => {
            let (i, h, o) = (dim(i)?, dim(h)?, dim(o)?);
            h * i + h * h + o * h + h + o
        }
        (TAG_LSTM, &[v, e, h]) => LstmClassifierParams::zeros(dim(v)?, dim(e)?, dim(h)?).num_params(),
        (TAG_VANILLA | TAG_LSTM, _) => {
            return Err(Error::Format(format!("bad shape header {shape:?} for tag {tag}")))
        }
        _ => return Err(Error::Format(format!("unknown architecture tag {tag}"))),
    };
    if len != expected as u64 {
        return Err(Error::Format(format!(
            "payload holds {len} values but the shape needs {expected}"
        )));
    }
    let payload = (0..expected)
        .map(|_| read_array::<8, _>(&mut r, "payload").map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }

    let model = match tag {
        TAG_VANILLA => {
            let activation = HiddenActivation::from_code(shape[3])
                .ok_or_else(|| Error::Format(format!("unknown activation code {}", shape[3])))?;
            let p = VanillaRnnParams::from_flat(
                shape[0] as usize,
                shape[1] as usize,
                shape[2] as usize,
                activation,
                &payload,
            )?;
            p.validate().map_err(|e| Error::Format(e.to_string()))?;
            Model::Sequential(p)
        }
        _ => {
            let p = LstmClassifierParams::from_flat(
                shape[0] as usize,
                shape[1] as usize,
                shape[2] as usize,
                &payload,
            )?;
            p.validate().map_err(|e| Error::Format(e.to_string()))?;
            Model::Classifier(p)
        }
    };
    Ok(model)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` and its `.json` sidecar.
pub fn save_model(path: &Path, model: &Model, metadata: &ModelMetadata) -> Result<()> {
    let mut bytes = Vec::new();
    write_model(&mut bytes, model)?;
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(metadata)? + "\n")?;
    Ok(())
}

/// Reads a model and, when present, its sidecar.
pub fn load_model(path: &Path) -> Result<(Model, Option<ModelMetadata>)> {
    let bytes = fs::read(path)?;
    let model = read_model(bytes.as_slice())?;
    let sidecar = sidecar_path(path);
    let metadata = if sidecar.exists() {
        Some(serde_json::from_str(&fs::read_to_string(sidecar)?).map_err(|e| Error::Format(e.to_string()))?)
    } else {
        None
    };
    Ok((model, metadata))
}
