//! `.lflo` dumps: magic `LFLO` | width u16 | height u16 | f32 u-plane | f32 v-plane.

use std::fs;
use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LFLO";
const HEADER_LEN: usize = 8;

pub fn encode_lflo(flow: &FlowField) -> Result<Vec<u8>> {
    if flow.width > u16::MAX as usize || flow.height > u16::MAX as usize {
        return Err(Error::dim("flow too large for the LFLO header"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + flow.u.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(flow.width as u16).to_le_bytes());
    out.extend_from_slice(&(flow.height as u16).to_le_bytes());
    for x in flow.u.iter().chain(&flow.v) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_lflo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected LFLO"));
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let height = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let n = width * height;
    let expected = HEADER_LEN + 8 * n;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected) as u64,
            format!(
                "expected {expected} bytes for {width}x{height}, found {}",
                bytes.len()
            ),
        ));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let u: Vec<f32> = floats.by_ref().take(n).collect();
    let v: Vec<f32> = floats.collect();
    FlowField::new(width, height, u, v)
}

pub fn save_lflo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_lflo(flow)?).map_err(|e| Error::at_path(path, e))
}

pub fn load_lflo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    decode_lflo(&fs::read(path).map_err(|e| Error::at_path(path, e))?)
}
