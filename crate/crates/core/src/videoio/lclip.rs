//! The `.lclip` container: a fixed 24-byte little-endian header followed by
//! `index u32 | timestamp_ms u32 | RGB24 payload` per frame.
//!
//! Header layout: magic `LCLP` | version u16 | width u16 | height u16 |
//! fps u16 | frame_count u32 | label u8 (255 = unlabeled) | group u8 |
//! clip u16 | 4 reserved bytes.

use std::fs;
use std::path::Path;

use super::{ActionLabel, Clip, Frame};
use crate::error::{Error, Result};

pub const LCLIP_MAGIC: &[u8; 4] = b"LCLP";
pub const LCLIP_VERSION: u16 = 1;
pub const LCLIP_HEADER_LEN: usize = 24;
const FRAME_PREFIX_LEN: usize = 8;
const UNLABELED: u8 = 255;

pub fn encoded_len(width: usize, height: usize, frames: usize) -> usize {
    LCLIP_HEADER_LEN + frames * (FRAME_PREFIX_LEN + width * height * 3)
}

pub fn encode_clip(clip: &Clip) -> Result<Vec<u8>> {
    clip.validate()?;
    let (width, height) = clip.dims().unwrap_or((0, 0));
    if width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(Error::dim(format!(
            "{width}x{height} exceeds the u16 header fields"
        )));
    }
    let count = u32::try_from(clip.frames.len()).map_err(|_| Error::invalid("too many frames"))?;

    let mut out = Vec::with_capacity(encoded_len(width, height, clip.frames.len()));
    out.extend_from_slice(LCLIP_MAGIC);
    out.extend_from_slice(&LCLIP_VERSION.to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&(height as u16).to_le_bytes());
    out.extend_from_slice(&clip.fps.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.push(clip.label.map_or(UNLABELED, |l| l.index() as u8));
    out.push(clip.group_id);
    out.extend_from_slice(&clip.clip_id.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    debug_assert_eq!(out.len(), LCLIP_HEADER_LEN);

    for f in &clip.frames {
        out.extend_from_slice(&f.index.to_le_bytes());
        out.extend_from_slice(&f.timestamp_ms.to_le_bytes());
        out.extend_from_slice(&f.pixels);
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.buf.len() as u64,
                format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_clip(bytes: &[u8]) -> Result<Clip> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != LCLIP_MAGIC {
        return Err(Error::format(0, "bad magic, expected LCLP"));
    }
    let version = r.u16("version")?;
    if version != LCLIP_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let width = r.u16("width")? as usize;
    let height = r.u16("height")? as usize;
    if width == 0 || height == 0 {
        return Err(Error::format(
            6,
            format!("invalid dimensions {width}x{height}"),
        ));
    }
    let fps = r.u16("fps")?;
    if fps == 0 {
        return Err(Error::format(10, "fps must be positive"));
    }
    let count = r.u32("frame count")? as usize;
    let label = match r.u8("label")? {
        UNLABELED => None,
        v => Some(
            ActionLabel::from_index(v as usize)
                .ok_or_else(|| Error::format(16, format!("invalid label {v}")))?,
        ),
    };
    let group_id = r.u8("group")?;
    let clip_id = r.u16("clip")?;
    r.take(4, "reserved")?;

    let frame_len = width * height * 3;
    let expected = encoded_len(width, height, count);
    if bytes.len() > expected {
        return Err(Error::format(
            expected as u64,
            format!(
                "{} trailing bytes after {count} frames",
                bytes.len() - expected
            ),
        ));
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let index = r.u32("frame index")?;
        let timestamp_ms = r.u32("frame timestamp")?;
        let pixels = r.take(frame_len, "frame payload")?.to_vec();
        frames.push(Frame {
            width,
            height,
            pixels,
            index,
            timestamp_ms,
        });
    }
    Ok(Clip {
        frames,
        fps,
        label,
        group_id,
        clip_id,
    })
}

pub fn save_clip(clip: &Clip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_clip(clip)?;
    fs::write(path, bytes).map_err(|e| Error::at_path(path, e))
}

pub fn load_clip(path: impl AsRef<Path>) -> Result<Clip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::at_path(path, e))?;
    decode_clip(&bytes)
}
