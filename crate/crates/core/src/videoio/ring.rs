use std::collections::VecDeque;

use super::{Clip, Frame};
use crate::error::{Error, Result};

/// Five seconds at 30 fps: the longest clip plus a second of margin.
pub const DEFAULT_RING_CAPACITY: usize = 150;

/// Fixed-capacity frame history kept on the edge so that the seconds leading
/// up to a detection can be shipped with the alert.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    capacity: usize,
    fps: u16,
    frames: VecDeque<Frame>,
}

/// Result of a clip extraction. `short` is set when fewer frames were
/// available than requested.
#[derive(Debug, Clone)]
pub struct Extracted {
    pub clip: Clip,
    pub short: bool,
    pub requested: usize,
}

impl RingBuffer {
    pub fn new(capacity: usize, fps: u16) -> Result<Self> {
        if capacity == 0 || fps == 0 {
            return Err(Error::invalid("ring capacity and fps must be positive"));
        }
        Ok(Self {
            capacity,
            fps,
            frames: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, frame: Frame) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    fn requested(&self, duration_s: f64) -> Result<usize> {
        let max_s = self.capacity as f64 / self.fps as f64;
        if !(duration_s >= 0.0) || duration_s > max_s + 1e-9 {
            return Err(Error::invalid(format!(
                "requested {duration_s} s but the ring holds at most {max_s} s"
            )));
        }
        Ok((duration_s * self.fps as f64).round() as usize)
    }

    /// The most recent `duration_s` seconds, oldest first.
    pub fn extract(&self, duration_s: f64) -> Result<Extracted> {
        let n = self.requested(duration_s)?;
        let start = self.frames.len().saturating_sub(n);
        Ok(self.snapshot(start, self.frames.len(), n))
    }

    /// The `duration_s` seconds ending at (and including) frame `last_index`.
    pub fn extract_ending_at(&self, last_index: u32, duration_s: f64) -> Result<Extracted> {
        let n = self.requested(duration_s)?;
        let end = self.frames.partition_point(|f| f.index <= last_index);
        let start = end.saturating_sub(n);
        Ok(self.snapshot(start, end, n))
    }

    fn snapshot(&self, start: usize, end: usize, requested: usize) -> Extracted {
        let frames: Vec<Frame> = self.frames.range(start..end).cloned().collect();
        let short = frames.len() < requested;
        Extracted {
            clip: Clip {
                frames,
                fps: self.fps,
                label: None,
                group_id: 0,
                clip_id: 0,
            },
            short,
            requested,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(i: u32) -> Frame {
        Frame::blank(2, 2, i, 30)
    }

    fn indices(e: &Extracted) -> Vec<u32> {
        e.clip.frames.iter().map(|f| f.index).collect()
    }

    #[test]
    fn keeps_most_recent_frames() {
        let mut ring = RingBuffer::new(120, 30).unwrap();
        for i in 0..200 {
            ring.push(frame(i));
        }
        let e = ring.extract(4.0).unwrap();
        assert!(!e.short);
        assert_eq!(indices(&e), (80..200).collect::<Vec<_>>());
        // extraction leaves the ring untouched
        assert_eq!(ring.len(), 120);
        assert_eq!(ring.extract(4.0).unwrap().clip, e.clip);
    }

    #[test]
    fn empty_ring_gives_short_empty_clip() {
        let ring = RingBuffer::new(150, 30).unwrap();
        let e = ring.extract(4.0).unwrap();
        assert!(e.short);
        assert!(e.clip.frames.is_empty());
    }

    #[test]
    fn underfilled_ring_flags_short() {
        let mut ring = RingBuffer::new(150, 30).unwrap();
        for i in 0..60 {
            ring.push(frame(i));
        }
        let e = ring.extract(3.0).unwrap();
        assert!(e.short);
        assert_eq!(e.requested, 90);
        assert_eq!(e.clip.frames.len(), 60);
    }

    #[test]
    fn over_capacity_request_rejected() {
        let ring = RingBuffer::new(120, 30).unwrap();
        assert!(ring.extract(4.5).is_err());
    }

    #[test]
    fn extract_ending_at_detection_frame() {
        let mut ring = RingBuffer::new(150, 30).unwrap();
        for i in 0..160 {
            ring.push(frame(i));
        }
        let e = ring.extract_ending_at(150, 4.0).unwrap();
        assert_eq!(indices(&e), (31..=150).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn holds_last_capacity_frames(cap in 1usize..64, pushes in 0usize..300) {
            let mut ring = RingBuffer::new(cap, 30).unwrap();
            for i in 0..pushes {
                ring.push(frame(i as u32));
            }
            let got: Vec<u32> = ring.iter().map(|f| f.index).collect();
            let want: Vec<u32> = (pushes.saturating_sub(cap)..pushes).map(|i| i as u32).collect();
            prop_assert_eq!(got, want);
        }
    }
}
