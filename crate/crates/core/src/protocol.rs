//! Binary frame stream used when inference runs on the relay.
//!
//! The camera opens with `"LENS" | version u8 | id_len u8 | id`, then sends
//! frames as `index u32 | timestamp_ms u64 | width u16 | height u16 |
//! pixfmt u8 | payload`. The relay answers each frame with `index u32` and
//! twelve `f32` scores (spatial, temporal, fused). All integers are
//! little-endian. A response whose index is [`DIAGNOSTIC_INDEX`] carries a
//! `u16` length and a UTF-8 reason instead of scores and is the last thing
//! the relay sends before closing.
//!
//! Decoders work on a growing byte buffer: they return `Ok(None)` until a
//! whole message is present and report how many bytes it used.

use crate::error::{Error, Result};
use crate::streams::ClassScores;
use crate::videoio::Frame;

pub const MAGIC: &[u8; 4] = b"LENS";
pub const VERSION: u8 = 1;
pub const PIXFMT_RGB24: u8 = 0;
pub const FRAME_HEADER_LEN: usize = 17;
pub const SCORES_LEN: usize = 4 + 12 * 4;
pub const DIAGNOSTIC_INDEX: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub camera_id: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameScores {
    pub frame_index: u32,
    pub spatial: ClassScores,
    pub temporal: ClassScores,
    pub fused: ClassScores,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Scores(FrameScores),
    Diagnostic(String),
}

pub fn encode_hello(hello: &Hello) -> Result<Vec<u8>> {
    let id = hello.camera_id.as_bytes();
    if id.is_empty() || id.len() > u8::MAX as usize {
        return Err(Error::invalid(format!(
            "camera id must be 1..=255 bytes, got {}",
            id.len()
        )));
    }
    let mut out = Vec::with_capacity(6 + id.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(id.len() as u8);
    out.extend_from_slice(id);
    Ok(out)
}

pub fn decode_hello(buf: &[u8]) -> Result<Option<(Hello, usize)>> {
    let have = buf.len().min(4);
    if buf[..have] != MAGIC[..have] {
        return Err(Error::format(0, "bad magic, expected \"LENS\""));
    }
    if buf.len() < 6 {
        return Ok(None);
    }
    if buf[4] != VERSION {
        return Err(Error::format(4, format!("unsupported version {}", buf[4])));
    }
    let n = buf[5] as usize;
    if n == 0 {
        return Err(Error::format(5, "empty camera id"));
    }
    if buf.len() < 6 + n {
        return Ok(None);
    }
    let camera_id = std::str::from_utf8(&buf[6..6 + n])
        .map_err(|_| Error::format(6, "camera id is not UTF-8"))?
        .to_string();
    Ok(Some((Hello { camera_id }, 6 + n)))
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>> {
    let (w, h) = (frame.width, frame.height);
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::invalid(format!(
            "frame {w}x{h} too large for the wire format"
        )));
    }
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + frame.pixels.len());
    out.extend_from_slice(&frame.index.to_le_bytes());
    out.extend_from_slice(&(frame.timestamp_ms as u64).to_le_bytes());
    out.extend_from_slice(&(w as u16).to_le_bytes());
    out.extend_from_slice(&(h as u16).to_le_bytes());
    out.push(PIXFMT_RGB24);
    out.extend_from_slice(&frame.pixels);
    Ok(out)
}

/// Frame dimensions above this are treated as a protocol violation rather
/// than buffered.
pub const MAX_FRAME_SIDE: usize = 4096;

pub fn decode_frame(buf: &[u8]) -> Result<Option<(Frame, usize)>> {
    if buf.len() < FRAME_HEADER_LEN {
        return Ok(None);
    }
    let index = u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes"));
    let ts = u64::from_le_bytes(buf[4..12].try_into().expect("8 bytes"));
    let w = u16::from_le_bytes([buf[12], buf[13]]) as usize;
    let h = u16::from_le_bytes([buf[14], buf[15]]) as usize;
    if buf[16] != PIXFMT_RGB24 {
        return Err(Error::format(
            16,
            format!("unsupported pixel format {}", buf[16]),
        ));
    }
    if w == 0 || h == 0 || w > MAX_FRAME_SIDE || h > MAX_FRAME_SIDE {
        return Err(Error::format(12, format!("bad frame size {w}x{h}")));
    }
    let ts =
        u32::try_from(ts).map_err(|_| Error::format(4, format!("timestamp {ts} out of range")))?;
    let n = FRAME_HEADER_LEN + w * h * 3;
    if buf.len() < n {
        return Ok(None);
    }
    let frame = Frame::new(w, h, buf[FRAME_HEADER_LEN..n].to_vec(), index, ts)?;
    Ok(Some((frame, n)))
}

pub fn encode_scores(s: &FrameScores) -> Vec<u8> {
    let mut out = Vec::with_capacity(SCORES_LEN);
    out.extend_from_slice(&s.frame_index.to_le_bytes());
    for p in [&s.spatial, &s.temporal, &s.fused] {
        for v in p.probs {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn encode_diagnostic(reason: &str) -> Vec<u8> {
    let bytes = &reason.as_bytes()[..reason.len().min(u16::MAX as usize)];
    let mut out = Vec::with_capacity(6 + bytes.len());
    out.extend_from_slice(&DIAGNOSTIC_INDEX.to_le_bytes());
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
    out
}

fn scores_at(buf: &[u8], off: usize) -> ClassScores {
    let mut p = [0.0; 4];
    for (i, v) in p.iter_mut().enumerate() {
        let o = off + 4 * i;
        *v = f32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes")) as f64;
    }
    ClassScores { probs: p }
}

pub fn decode_response(buf: &[u8]) -> Result<Option<(Response, usize)>> {
    if buf.len() < 4 {
        return Ok(None);
    }
    let index = u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes"));
    if index == DIAGNOSTIC_INDEX {
        if buf.len() < 6 {
            return Ok(None);
        }
        let n = u16::from_le_bytes([buf[4], buf[5]]) as usize;
        if buf.len() < 6 + n {
            return Ok(None);
        }
        let reason = String::from_utf8_lossy(&buf[6..6 + n]).into_owned();
        return Ok(Some((Response::Diagnostic(reason), 6 + n)));
    }
    if buf.len() < SCORES_LEN {
        return Ok(None);
    }
    let s = FrameScores {
        frame_index: index,
        spatial: scores_at(buf, 4),
        temporal: scores_at(buf, 20),
        fused: scores_at(buf, 36),
    };
    Ok(Some((Response::Scores(s), SCORES_LEN)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(w: usize, h: usize, index: u32) -> Frame {
        let px = (0..w * h * 3).map(|i| (i * 7 % 251) as u8).collect();
        Frame::at(w, h, px, index, 30).unwrap()
    }

    #[test]
    fn hello_round_trip_and_partial_reads() {
        let bytes = encode_hello(&Hello {
            camera_id: "cam-7".into(),
        })
        .unwrap();
        assert_eq!(&bytes[..4], b"LENS");
        for cut in 0..bytes.len() {
            assert!(decode_hello(&bytes[..cut]).unwrap().is_none());
        }
        let (h, n) = decode_hello(&bytes).unwrap().unwrap();
        assert_eq!(h.camera_id, "cam-7");
        assert_eq!(n, bytes.len());
    }

    #[test]
    fn corrupt_magic_is_rejected_early() {
        assert!(decode_hello(b"LX").is_err());
        assert!(decode_hello(b"XENS\x01\x01a").is_err());
        assert!(decode_hello(b"LENS\x02\x01a").is_err());
    }

    #[test]
    fn frame_round_trip() {
        let f = frame(5, 3, 42);
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.len(), FRAME_HEADER_LEN + 45);
        assert!(decode_frame(&bytes[..bytes.len() - 1]).unwrap().is_none());
        let (g, n) = decode_frame(&bytes).unwrap().unwrap();
        assert_eq!(n, bytes.len());
        assert_eq!(g, f);
    }

    #[test]
    fn bad_pixel_format_is_a_format_error() {
        let mut bytes = encode_frame(&frame(2, 2, 0)).unwrap();
        bytes[16] = 9;
        assert!(matches!(
            decode_frame(&bytes),
            Err(Error::Format { offset: 16, .. })
        ));
    }

    #[test]
    fn responses_round_trip() {
        let s = FrameScores {
            frame_index: 9,
            spatial: ClassScores { probs: [0.25; 4] },
            temporal: ClassScores {
                probs: [0.5, 0.5, 0.0, 0.0],
            },
            fused: ClassScores {
                probs: [0.0, 0.0, 0.125, 0.875],
            },
        };
        let mut buf = encode_scores(&s);
        buf.extend(encode_diagnostic("bad magic"));
        let (r, n) = decode_response(&buf).unwrap().unwrap();
        assert_eq!(r, Response::Scores(s));
        let (d, m) = decode_response(&buf[n..]).unwrap().unwrap();
        assert_eq!(d, Response::Diagnostic("bad magic".into()));
        assert_eq!(n + m, buf.len());
    }

    proptest! {
        #[test]
        fn frames_survive_arbitrary_chunking(w in 1usize..9, h in 1usize..9, index in 0u32..1000, cut in 0usize..300) {
            let f = frame(w, h, index);
            let bytes = encode_frame(&f).unwrap();
            let cut = cut.min(bytes.len());
            if cut < bytes.len() {
                prop_assert!(decode_frame(&bytes[..cut]).unwrap().is_none());
            }
            prop_assert_eq!(decode_frame(&bytes).unwrap().unwrap().0, f);
        }
    }
}
