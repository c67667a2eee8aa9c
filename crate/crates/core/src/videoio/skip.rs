use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Frame;
use crate::error::{Error, Result};

/// Number of frames dropped between two processed frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkipPolicy {
    skip: u32,
}

impl SkipPolicy {
    /// Beyond four skipped frames accuracy degrades, so larger values are refused.
    pub const MAX_SKIP: u32 = 4;

    pub fn new(skip: u32) -> Result<Self> {
        if skip > Self::MAX_SKIP {
            return Err(Error::invalid(format!(
                "skip {skip} outside supported range 0..={}",
                Self::MAX_SKIP
            )));
        }
        Ok(Self { skip })
    }

    pub const fn none() -> Self {
        Self { skip: 0 }
    }

    pub fn skip(self) -> u32 {
        self.skip
    }

    /// Distance between processed frame positions.
    pub fn stride(self) -> usize {
        self.skip as usize + 1
    }

    pub fn keeps(self, position: usize) -> bool {
        position % self.stride() == 0
    }
}

/// Frames at positions `0, s+1, 2(s+1), ...`.
pub fn skip_iter<'a>(
    frames: &'a [Frame],
    policy: SkipPolicy,
) -> impl Iterator<Item = &'a Frame> + 'a {
    frames.iter().step_by(policy.stride())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub skip: u32,
    pub frames_processed: u64,
    /// Frames accounted for, including the skipped ones.
    pub frames_covered: u64,
    pub wall_ms: f64,
    pub processing_fps: f64,
    pub effective_fps: f64,
}

impl ThroughputReport {
    fn from_counts(policy: SkipPolicy, processed: u64, wall: Duration) -> Self {
        let wall_s = wall.as_secs_f64();
        let processing_fps = if wall_s > 0.0 {
            processed as f64 / wall_s
        } else {
            0.0
        };
        Self {
            skip: policy.skip(),
            frames_processed: processed,
            frames_covered: processed * policy.stride() as u64,
            wall_ms: wall_s * 1e3,
            processing_fps,
            effective_fps: processing_fps * policy.stride() as f64,
        }
    }
}

/// Pulls frames from `source`, runs `work` on every frame the policy keeps and
/// stops once `window` has elapsed (or the source runs dry).
pub fn measure_throughput<S, W>(
    source: S,
    mut work: W,
    policy: SkipPolicy,
    window: Duration,
) -> Result<ThroughputReport>
where
    S: IntoIterator<Item = Frame>,
    W: FnMut(&Frame),
{
    if window < Duration::from_secs(1) {
        return Err(Error::invalid(format!(
            "measurement window {window:?} is shorter than 1 s"
        )));
    }
    let mut processed = 0u64;
    let start = Instant::now();
    for (pos, frame) in source.into_iter().enumerate() {
        if !policy.keeps(pos) {
            continue;
        }
        work(&frame);
        processed += 1;
        if start.elapsed() >= window {
            break;
        }
    }
    Ok(ThroughputReport::from_counts(
        policy,
        processed,
        start.elapsed(),
    ))
}

/// A calibrated stand-in for per-frame processing cost.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticCost {
    pub per_frame: Duration,
}

impl SyntheticCost {
    pub fn from_millis(ms: f64) -> Self {
        Self {
            per_frame: Duration::from_secs_f64(ms.max(0.0) / 1e3),
        }
    }

    pub fn run(&self) {
        if self.per_frame.is_zero() {
            return;
        }
        let deadline = Instant::now() + self.per_frame;
        // sleep most of the way, then spin so the cost stays within a few µs
        if self.per_frame > Duration::from_millis(2) {
            std::thread::sleep(self.per_frame - Duration::from_millis(1));
        }
        while Instant::now() < deadline {
            std::hint::spin_loop();
        }
    }
}
