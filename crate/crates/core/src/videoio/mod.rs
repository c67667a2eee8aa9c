//! Frames, clips and everything needed to move them around: the `.lclip`
//! container, the edge ring buffer, frame skipping, throughput measurement
//! and the synthetic low-light dataset generator.

mod dataset;
mod lclip;
mod ring;
mod skip;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{Dataset, DatasetEntry, DatasetManifest};
pub use lclip::{decode_clip, encode_clip, encoded_len, load_clip, save_clip, LCLIP_HEADER_LEN};
pub use ring::{Extracted, RingBuffer, DEFAULT_RING_CAPACITY};
pub use skip::{measure_throughput, skip_iter, SkipPolicy, SyntheticCost, ThroughputReport};
pub use synth::{generate_clip, generate_synthetic_dataset, SynthParams, NOISE_SIGMA};

/// Frame rate of every generated clip.
pub const DATASET_FPS: u16 = 30;

/// The four action classes, in their stable wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLabel {
    Theft = 0,
    Assault = 1,
    Shooting = 2,
    NoAction = 3,
}

impl ActionLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [ActionLabel; 4] = [
        ActionLabel::Theft,
        ActionLabel::Assault,
        ActionLabel::Shooting,
        ActionLabel::NoAction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionLabel::Theft => "theft",
            ActionLabel::Assault => "assault",
            ActionLabel::Shooting => "shooting",
            ActionLabel::NoAction => "no_action",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn is_crime(self) -> bool {
        self != ActionLabel::NoAction
    }
}

impl std::fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One RGB24 frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub index: u32,
    pub timestamp_ms: u32,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        index: u32,
        timestamp_ms: u32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::dim(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
            timestamp_ms,
        })
    }

    /// Builds a frame whose timestamp follows from its index and the clip rate.
    pub fn at(width: usize, height: usize, pixels: Vec<u8>, index: u32, fps: u16) -> Result<Self> {
        Self::new(width, height, pixels, index, timestamp_for(index, fps))
    }

    pub fn blank(width: usize, height: usize, index: u32, fps: u16) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
            index,
            timestamp_ms: timestamp_for(index, fps),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// BT.601 luma scaled to `[0, 1]`.
    pub fn luma(&self) -> Vec<f32> {
        self.pixels
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
            .collect()
    }

    pub fn mean_luma(&self) -> f64 {
        let sum: f64 = self.luma().iter().map(|&v| v as f64).sum();
        sum / (self.width * self.height) as f64
    }

    /// Box-filtered downscale by an integer-free ratio. Each output pixel
    /// averages the source pixels whose centres fall inside it.
    pub fn downscale(&self, width: usize, height: usize) -> Frame {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = vec![0u8; width * height * 3];
        for oy in 0..height {
            let y0 = oy * self.height / height;
            let y1 = ((oy + 1) * self.height / height).max(y0 + 1);
            for ox in 0..width {
                let x0 = ox * self.width / width;
                let x1 = ((ox + 1) * self.width / width).max(x0 + 1);
                let mut acc = [0u32; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = self.pixel(x, y);
                        acc[0] += p[0] as u32;
                        acc[1] += p[1] as u32;
                        acc[2] += p[2] as u32;
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as u32;
                let o = (oy * width + ox) * 3;
                for c in 0..3 {
                    out[o + c] = ((acc[c] + n / 2) / n) as u8;
                }
            }
        }
        Frame {
            width,
            height,
            pixels: out,
            index: self.index,
            timestamp_ms: self.timestamp_ms,
        }
    }
}

pub fn timestamp_for(index: u32, fps: u16) -> u32 {
    (index as u64 * 1000 / fps.max(1) as u64) as u32
}

/// An ordered run of frames sharing one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frames: Vec<Frame>,
    pub fps: u16,
    pub label: Option<ActionLabel>,
    pub group_id: u8,
    pub clip_id: u16,
}

impl Clip {
    pub fn new(frames: Vec<Frame>, fps: u16) -> Result<Self> {
        let clip = Self {
            frames,
            fps,
            label: None,
            group_id: 0,
            clip_id: 0,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn with_label(mut self, label: ActionLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.fps == 0 {
            return Err(Error::invalid("fps must be positive"));
        }
        if let Some(first) = self.frames.first() {
            for f in &self.frames {
                if f.width != first.width || f.height != first.height {
                    return Err(Error::dim(format!(
                        "frame {} is {}x{}, clip is {}x{}",
                        f.index, f.width, f.height, first.width, first.height
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width, f.height))
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps as f64
    }
}
