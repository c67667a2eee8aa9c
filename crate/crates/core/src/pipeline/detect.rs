use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::FrameScores;
use crate::error::{Error, Result};
use crate::event::{CrimeEvent, EventScores, Gps};
use crate::streams::ClassScores;
use crate::videoio::{ActionLabel, Extracted, RingBuffer};

pub const DEFAULT_DEBOUNCE: usize = 3;
pub const DEFAULT_COOLDOWN_MS: u64 = 5000;
/// Length of the clip attached to an event.
pub const CLIP_SECONDS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub label: ActionLabel,
    pub confidence: f64,
    pub at_ms: u64,
}

/// Debounce window plus cooldown that turns per-frame predictions into
/// discrete alerts.
#[derive(Debug, Clone)]
pub struct DetectionState {
    window: usize,
    cooldown_ms: u64,
    recent: VecDeque<(ActionLabel, f64)>,
    last_event_ms: Option<u64>,
}

impl DetectionState {
    pub fn new(window: usize, cooldown_ms: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("debounce window must be at least 1"));
        }
        Ok(Self {
            window,
            cooldown_ms,
            recent: VecDeque::with_capacity(window),
            last_event_ms: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Fires when the last `window` predictions agree on one crime label, all
    /// at or above `threshold` (clamped to `[0, 1]`), and the cooldown since
    /// the previous alert has passed. Firing clears the window.
    pub fn detect(
        &mut self,
        fused: &ClassScores,
        threshold: f64,
        now_ms: u64,
    ) -> Option<Detection> {
        let threshold = if threshold.is_nan() {
            1.0
        } else {
            threshold.clamp(0.0, 1.0)
        };
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        let label = fused.argmax();
        self.recent.push_back((label, fused.get(label)));
        if self.recent.len() < self.window || !label.is_crime() {
            return None;
        }
        if !self
            .recent
            .iter()
            .all(|&(l, c)| l == label && c >= threshold)
        {
            return None;
        }
        if let Some(last) = self.last_event_ms {
            if now_ms.saturating_sub(last) < self.cooldown_ms {
                return None;
            }
        }
        self.recent.clear();
        self.last_event_ms = Some(now_ms);
        Some(Detection {
            label,
            confidence: fused.get(label),
            at_ms: now_ms,
        })
    }
}

/// Static identity of a camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSource {
    pub camera_id: String,
    pub gps: Gps,
}

/// Builds the event for a detection together with the clip of the
/// [`CLIP_SECONDS`] leading up to (and including) the detection frame.
pub fn assemble_event(
    detection: &Detection,
    scores: &FrameScores,
    ring: &RingBuffer,
    source: &EventSource,
) -> Result<(CrimeEvent, Extracted)> {
    let clip = ring.extract_ending_at(scores.frame_index, CLIP_SECONDS)?;
    let event = CrimeEvent {
        event_id: Uuid::new_v4(),
        camera_id: source.camera_id.clone(),
        gps: source.gps,
        timestamp_ms: detection.at_ms,
        label: detection.label,
        confidence: detection.confidence,
        scores: EventScores::new(&scores.spatial, &scores.temporal, &scores.fused),
        clip_ref: None,
        short: clip.short,
    };
    Ok((event, clip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::videoio::Frame;
    use proptest::prelude::*;

    fn peaked(label: ActionLabel, conf: f64) -> ClassScores {
        let mut p = [(1.0 - conf) / 3.0; 4];
        p[label.index()] = conf;
        ClassScores { probs: p }
    }

    #[test]
    fn three_agreeing_predictions_fire() {
        let mut s = DetectionState::new(3, 5000).unwrap();
        let t = peaked(ActionLabel::Theft, 0.8);
        assert!(s.detect(&t, 0.6, 0).is_none());
        assert!(s.detect(&t, 0.6, 1).is_none());
        let d = s.detect(&t, 0.6, 2).unwrap();
        assert_eq!(d.label, ActionLabel::Theft);
        assert_eq!(d.confidence, 0.8);
    }

    #[test]
    fn mixed_labels_do_not_fire() {
        let mut s = DetectionState::new(3, 0).unwrap();
        s.detect(&peaked(ActionLabel::Theft, 0.8), 0.6, 0);
        s.detect(&peaked(ActionLabel::Assault, 0.8), 0.6, 1);
        assert!(s.detect(&peaked(ActionLabel::Theft, 0.8), 0.6, 2).is_none());
    }

    #[test]
    fn cooldown_blocks_a_second_alert() {
        let mut s = DetectionState::new(1, 5000).unwrap();
        let t = peaked(ActionLabel::Shooting, 0.9);
        assert!(s.detect(&t, 0.5, 1000).is_some());
        assert!(s.detect(&t, 0.5, 1001).is_none());
        assert!(s.detect(&t, 0.5, 5999).is_none());
        assert!(s.detect(&t, 0.5, 6000).is_some());
    }

    #[test]
    fn no_action_never_fires_and_threshold_is_clamped() {
        let mut s = DetectionState::new(1, 0).unwrap();
        assert!(s
            .detect(&peaked(ActionLabel::NoAction, 0.99), 0.0, 0)
            .is_none());
        assert!(s
            .detect(&peaked(ActionLabel::Theft, 0.99), 1.01, 1)
            .is_none());
        assert!(s
            .detect(&peaked(ActionLabel::Theft, 1.0), 1.01, 2)
            .is_some());
    }

    #[test]
    fn event_carries_a_four_second_clip() {
        let mut ring = RingBuffer::new(150, 30).unwrap();
        for i in 0..=160 {
            ring.push(Frame::blank(2, 2, i, 30));
        }
        let u = ClassScores { probs: [0.25; 4] };
        let scores = FrameScores {
            frame_index: 150,
            spatial: u,
            temporal: u,
            fused: peaked(ActionLabel::Shooting, 0.7),
        };
        let det = Detection {
            label: ActionLabel::Shooting,
            confidence: 0.7,
            at_ms: 5,
        };
        let source = EventSource {
            camera_id: "cam".into(),
            gps: Gps {
                lat: 42.34,
                lon: -71.09,
            },
        };
        let (a, clip) = assemble_event(&det, &scores, &ring, &source).unwrap();
        let (b, _) = assemble_event(&det, &scores, &ring, &source).unwrap();
        assert_eq!(clip.clip.frames.first().unwrap().index, 31);
        assert_eq!(clip.clip.frames.last().unwrap().index, 150);
        assert!(!clip.short);
        assert_eq!(a.gps, source.gps);
        assert_ne!(a.event_id, b.event_id);
        a.validate().unwrap();
    }

    fn stream() -> impl Strategy<Value = Vec<(usize, f64)>> {
        prop::collection::vec((0usize..4, 0.25..1.0f64), 1..60)
    }

    proptest! {
        #[test]
        fn alerts_respect_threshold_and_are_monotone(seq in stream(), lo in 0.0..1.0f64, step in 0.0..0.5f64) {
            let run = |threshold: f64| {
                let mut s = DetectionState::new(2, 0).unwrap();
                let mut fired = Vec::new();
                for (t, &(l, c)) in seq.iter().enumerate() {
                    if let Some(d) = s.detect(&peaked(ActionLabel::ALL[l], c), threshold, t as u64) {
                        fired.push(d);
                    }
                }
                fired
            };
            let a = run(lo);
            for d in &a {
                prop_assert!(d.confidence >= lo && d.label.is_crime());
            }
            prop_assert!(run(lo + step).len() <= a.len());
        }
    }
}
