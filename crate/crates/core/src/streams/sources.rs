//! Training/evaluation views over clips for each stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::train::{Mode, VideoSource};
use super::{
    augment, eval_transform, sample_segment_frames, segment_centers, AugmentConfig, SEGMENTS,
};
use crate::error::{Error, Result};
use crate::optflow::{
    discretize_component, stack_flows, tvl1_flow_luma, FlowField, StackedFlow, Tvl1Params,
};
use crate::videoio::{ActionLabel, Clip, Frame};

/// Offset and scale applied to quantised flow values.
pub const FLOW_MEAN: f64 = 128.0;
pub const FLOW_STD: f64 = 4.0;

/// Flow as the temporal stream sees it: frames are box-downscaled to the
/// stream's input size before TV-L1 runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowFrontEnd {
    pub width: usize,
    pub height: usize,
    pub params: Tvl1Params,
}

impl Default for FlowFrontEnd {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            params: Tvl1Params::default(),
        }
    }
}

impl FlowFrontEnd {
    pub fn luma(&self, frame: &Frame) -> Vec<f32> {
        frame.downscale(self.width, self.height).luma()
    }

    pub fn flow(&self, prev: &[f32], next: &[f32]) -> Result<FlowField> {
        tvl1_flow_luma(self.width, self.height, prev, next, &self.params)
    }

    /// Flows between each consecutive pair of `frames`.
    pub fn flows<'a, I>(&self, frames: I) -> Result<Vec<FlowField>>
    where
        I: IntoIterator<Item = &'a Frame>,
    {
        let lumas: Vec<Vec<f32>> = frames.into_iter().map(|f| self.luma(f)).collect();
        lumas.windows(2).map(|w| self.flow(&w[0], &w[1])).collect()
    }

    pub fn clip_flows(&self, clip: &Clip) -> Result<ClipFlows> {
        Ok(ClipFlows {
            label: clip.label,
            flows: self.flows(&clip.frames)?,
            width: self.width,
            height: self.height,
        })
    }
}

/// All consecutive-pair flows of one clip.
#[derive(Debug, Clone)]
pub struct ClipFlows {
    pub label: Option<ActionLabel>,
    pub flows: Vec<FlowField>,
    pub width: usize,
    pub height: usize,
}

impl ClipFlows {
    /// `stack_len` flows starting at `start`, zero-padded past the end.
    pub fn stack(&self, start: usize, stack_len: usize) -> Result<StackedFlow> {
        let zero = FlowField::zeros(self.width, self.height);
        let flows: Vec<&FlowField> = (start..start + stack_len)
            .map(|i| self.flows.get(i).unwrap_or(&zero))
            .collect();
        stack_flows(&flows)
    }

    fn max_start(&self, stack_len: usize) -> usize {
        self.flows.len().saturating_sub(stack_len)
    }
}

/// Quantises a stack and normalises it into a stream input tensor.
pub fn flow_tensor(stack: &StackedFlow) -> Tensor {
    let mut t = Tensor::zeros(stack.channel_count(), stack.height, stack.width);
    for (c, plane) in stack.channels.iter().enumerate() {
        let n = stack.width * stack.height;
        for (dst, &x) in t.data[c * n..(c + 1) * n].iter_mut().zip(plane) {
            *dst = (discretize_component(x) as f64 - FLOW_MEAN) / FLOW_STD;
        }
    }
    t
}

/// RGB frames sampled from segment windows.
pub struct SpatialSource<'a> {
    pub clips: &'a [Clip],
    pub augment: AugmentConfig,
    pub segments: usize,
}

impl<'a> SpatialSource<'a> {
    pub fn new(clips: &'a [Clip], augment: AugmentConfig) -> Self {
        Self {
            clips,
            augment,
            segments: SEGMENTS,
        }
    }
}

impl VideoSource for SpatialSource<'_> {
    fn len(&self) -> usize {
        self.clips.len()
    }

    fn label(&self, i: usize) -> Result<ActionLabel> {
        self.clips[i]
            .label
            .ok_or_else(|| Error::invalid(format!("clip {i} is unlabeled")))
    }

    fn inputs(&self, i: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>> {
        let clip = &self.clips[i];
        match mode {
            Mode::Train => sample_segment_frames(clip.len(), self.segments, rng)?
                .into_iter()
                .map(|f| augment(&clip.frames[f], &self.augment, rng))
                .collect(),
            Mode::Eval => segment_centers(clip.len(), self.segments)?
                .into_iter()
                .map(|f| eval_transform(&clip.frames[f], &self.augment))
                .collect(),
        }
    }
}

/// One stacked flow per video: random start while training, centred at test.
pub struct TemporalSource<'a> {
    pub clips: &'a [ClipFlows],
    pub stack_len: usize,
}

impl VideoSource for TemporalSource<'_> {
    fn len(&self) -> usize {
        self.clips.len()
    }

    fn label(&self, i: usize) -> Result<ActionLabel> {
        self.clips[i]
            .label
            .ok_or_else(|| Error::invalid(format!("clip {i} is unlabeled")))
    }

    fn inputs(&self, i: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>> {
        let c = &self.clips[i];
        let max = c.max_start(self.stack_len);
        let start = match mode {
            Mode::Train => rng.random_range(0..=max),
            Mode::Eval => max / 2,
        };
        Ok(vec![flow_tensor(&c.stack(start, self.stack_len)?)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_maps_to_zero_input() {
        let s = stack_flows(&[FlowField::zeros(4, 4)]).unwrap();
        assert!(flow_tensor(&s).data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn short_clips_are_zero_padded() {
        let cf = ClipFlows {
            label: None,
            flows: vec![FlowField::uniform(2, 2, 1.0, 1.0); 3],
            width: 2,
            height: 2,
        };
        let s = cf.stack(0, 5).unwrap();
        assert_eq!(s.channel_count(), 10);
        assert_eq!(s.channels[4][0], 1.0);
        assert_eq!(s.channels[6][0], 0.0);
    }
}
