//! `.lmdl` checkpoints: magic `LMDL` | version u16 | kind u8 | reserved u8 |
//! channels, height, width, kernel, filters, hidden as u16 | param count u32 |
//! f32 parameters. Training metadata lives in a JSON sidecar next to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{ModelShape, StreamKind, StreamModel};
use super::train::{EpochMetrics, TrainConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LMDL";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub kind: StreamKind,
    pub config: Option<TrainConfig>,
    pub history: Vec<EpochMetrics>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode_model(model: &StreamModel) -> Result<Vec<u8>> {
    let s = &model.shape;
    let dims = [
        s.input_channels,
        s.input_height,
        s.input_width,
        s.kernel,
        s.filters,
        s.hidden,
    ];
    if dims.iter().any(|&d| d > u16::MAX as usize) {
        return Err(Error::dim("model dimension exceeds u16"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match model.kind {
        StreamKind::Spatial => 0,
        StreamKind::Temporal => 1,
    });
    out.push(0);
    for d in dims {
        out.extend_from_slice(&(d as u16).to_le_bytes());
    }
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for &p in &model.params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<StreamModel> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated LMDL header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected LMDL"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
    if u16_at(4) != VERSION as usize {
        return Err(Error::format(
            4,
            format!("unsupported version {}", u16_at(4)),
        ));
    }
    let kind = match bytes[6] {
        0 => StreamKind::Spatial,
        1 => StreamKind::Temporal,
        k => return Err(Error::format(6, format!("unknown stream kind {k}"))),
    };
    let shape = ModelShape {
        input_channels: u16_at(8),
        input_height: u16_at(10),
        input_width: u16_at(12),
        kernel: u16_at(14),
        filters: u16_at(16),
        hidden: u16_at(18),
    };
    let mut model = StreamModel::zeros(kind, shape).map_err(|e| Error::format(8, e.to_string()))?;
    let count = u32::from_le_bytes([bytes[20], bytes[21], bytes[22], bytes[23]]) as usize;
    if count != model.param_count() {
        return Err(Error::format(
            20,
            format!(
                "shape implies {} parameters, header says {count}",
                model.param_count()
            ),
        ));
    }
    let expected = HEADER_LEN + 4 * count;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected) as u64,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    for (p, c) in model
        .params
        .iter_mut()
        .zip(bytes[HEADER_LEN..].chunks_exact(4))
    {
        *p = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
    }
    Ok(model)
}

/// Writes the checkpoint and, when given, its sidecar.
pub fn save_model(
    model: &StreamModel,
    path: impl AsRef<Path>,
    sidecar: Option<&ModelSidecar>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)?).map_err(|e| Error::at_path(path, e))?;
    if let Some(sc) = sidecar {
        let side = sidecar_path(path);
        let mut text = serde_json::to_string_pretty(sc)?;
        text.push('\n');
        fs::write(&side, text).map_err(|e| Error::at_path(side, e))?;
    }
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StreamModel> {
    let path = path.as_ref();
    decode_model(&fs::read(path).map_err(|e| Error::at_path(path, e))?)
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<ModelSidecar> {
    let side = sidecar_path(path.as_ref());
    let text = fs::read_to_string(&side).map_err(|e| Error::at_path(&side, e))?;
    Ok(serde_json::from_str(&text)?)
}
