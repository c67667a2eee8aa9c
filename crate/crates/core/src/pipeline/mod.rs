//! Per-frame inference shared by the edge agent and the relay.
//!
//! A [`FrameProcessor`] keeps exactly two pieces of state between frames: the
//! luminance of the previous processed frame and the last `L` flows. That is
//! what lets [`score_clip_offline`] reproduce its output from a whole clip.

mod detect;
mod eval;
mod train;

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fusion::{load_svm, save_svm, FusionInput, SvmModel, SvmSidecar};
use crate::optflow::{stack_flows, FlowField};
use crate::streams::{
    load_model, save_model, ClassScores, FlowFrontEnd, ModelSidecar, StreamInput, StreamKind,
    StreamModel,
};
use crate::videoio::{skip_iter, Clip, Frame, SkipPolicy, SyntheticCost};

pub use crate::protocol::FrameScores;
pub use detect::{
    assemble_event, Detection, DetectionState, EventSource, CLIP_SECONDS, DEFAULT_COOLDOWN_MS,
    DEFAULT_DEBOUNCE,
};
pub use eval::{evaluate_models, EvalReport, ViewReport};
pub use train::{
    frame_features, stream_accuracy, train_fusion, train_models, train_streams, training_flows,
    FoldScores, FusionReport, TrainPlan, TrainReport, TrainedStreams,
};

pub const SPATIAL_FILE: &str = "spatial.lmdl";
pub const TEMPORAL_FILE: &str = "temporal.lmdl";
pub const FUSION_FILE: &str = "fusion.lsvm";

/// The three trained components.
#[derive(Debug, Clone)]
pub struct Models {
    pub spatial: StreamModel,
    pub temporal: StreamModel,
    pub svm: SvmModel,
}

impl Models {
    pub fn new(spatial: StreamModel, temporal: StreamModel, svm: SvmModel) -> Result<Self> {
        if spatial.kind != StreamKind::Spatial || temporal.kind != StreamKind::Temporal {
            return Err(Error::invalid("models are not a spatial/temporal pair"));
        }
        if svm.dim != 8 {
            return Err(Error::dim(format!(
                "fusion model expects {} features, not 8",
                svm.dim
            )));
        }
        Ok(Self {
            spatial,
            temporal,
            svm,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::new(
            load_model(dir.join(SPATIAL_FILE))?,
            load_model(dir.join(TEMPORAL_FILE))?,
            load_svm(dir.join(FUSION_FILE))?,
        )
    }

    pub fn save(
        &self,
        dir: impl AsRef<Path>,
        spatial: Option<&ModelSidecar>,
        temporal: Option<&ModelSidecar>,
        svm: Option<&SvmSidecar>,
    ) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
        save_model(&self.spatial, dir.join(SPATIAL_FILE), spatial)?;
        save_model(&self.temporal, dir.join(TEMPORAL_FILE), temporal)?;
        save_svm(&self.svm, dir.join(FUSION_FILE), svm)
    }

    /// Flow front end matching the temporal stream's input size, at half
    /// resolution when `reduced`.
    pub fn front_end(&self, reduced: bool) -> FlowFrontEnd {
        let s = &self.temporal.shape;
        let div = if reduced { 2 } else { 1 };
        FlowFrontEnd {
            width: (s.input_width / div).max(1),
            height: (s.input_height / div).max(1),
            ..FlowFrontEnd::default()
        }
    }

    fn fuse(
        &self,
        frame_index: u32,
        spatial: ClassScores,
        temporal: ClassScores,
    ) -> Result<FrameScores> {
        let fused = self
            .svm
            .scores(FusionInput::new(&spatial, &temporal).as_ref())?;
        Ok(FrameScores {
            frame_index,
            spatial,
            temporal,
            fused,
        })
    }
}

/// Nearest-neighbour upsampling with displacements scaled to the new grid.
fn upsample_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    if flow.width == width && flow.height == height {
        return flow.clone();
    }
    let (sx, sy) = (
        width as f32 / flow.width as f32,
        height as f32 / flow.height as f32,
    );
    let mut u = Vec::with_capacity(width * height);
    let mut v = Vec::with_capacity(width * height);
    for y in 0..height {
        let ys = (y * flow.height / height).min(flow.height - 1);
        for x in 0..width {
            let xs = (x * flow.width / width).min(flow.width - 1);
            let i = ys * flow.width + xs;
            u.push(flow.u[i] * sx);
            v.push(flow.v[i] * sy);
        }
    }
    FlowField {
        width,
        height,
        u,
        v,
    }
}

/// Anything that turns a processed frame into scores: the real models, a
/// remote relay or a synthetic cost model.
pub trait FrameScorer: Send {
    fn score(&mut self, frame: &Frame) -> Result<FrameScores>;
}

/// Streaming inference over processed frames.
pub struct FrameProcessor {
    models: Arc<Models>,
    front: FlowFrontEnd,
    prev: Option<Vec<f32>>,
    flows: VecDeque<FlowField>,
}

impl FrameProcessor {
    pub fn new(models: Arc<Models>, reduced: bool) -> Self {
        let front = models.front_end(reduced);
        Self {
            models,
            front,
            prev: None,
            flows: VecDeque::new(),
        }
    }

    pub fn models(&self) -> &Arc<Models> {
        &self.models
    }

    pub fn reset(&mut self) {
        self.prev = None;
        self.flows.clear();
    }
}

impl FrameScorer for FrameProcessor {
    fn score(&mut self, frame: &Frame) -> Result<FrameScores> {
        let m = &*self.models;
        let (w, h) = (m.temporal.shape.input_width, m.temporal.shape.input_height);
        let luma = self.front.luma(frame);
        if let Some(prev) = &self.prev {
            let f = self.front.flow(prev, &luma)?;
            if self.flows.len() == m.temporal.stack_len() {
                self.flows.pop_front();
            }
            self.flows.push_back(upsample_flow(&f, w, h));
        }
        self.prev = Some(luma);
        let spatial = m.spatial.forward(StreamInput::Frame(frame))?;
        let temporal = temporal_scores(m, self.flows.iter().collect())?;
        m.fuse(frame.index, spatial, temporal)
    }
}

/// The latest flows, oldest first, zero-padded up to the stack length.
fn temporal_scores(m: &Models, flows: Vec<&FlowField>) -> Result<ClassScores> {
    let s = &m.temporal.shape;
    let zero = FlowField::zeros(s.input_width, s.input_height);
    let mut padded = flows;
    padded.resize(padded.len().max(m.temporal.stack_len()), &zero);
    m.temporal
        .forward(StreamInput::Flow(&stack_flows(&padded)?))
}

/// Scores every frame the skip policy keeps, computing all flows up front.
pub fn score_clip_offline(
    models: &Models,
    clip: &Clip,
    skip: SkipPolicy,
    reduced: bool,
) -> Result<Vec<FrameScores>> {
    let kept: Vec<&Frame> = skip_iter(&clip.frames, skip).collect();
    let front = models.front_end(reduced);
    let s = &models.temporal.shape;
    let flows: Vec<FlowField> = front
        .flows(kept.iter().copied())?
        .iter()
        .map(|f| upsample_flow(f, s.input_width, s.input_height))
        .collect();
    let l = models.temporal.stack_len();
    kept.iter()
        .enumerate()
        .map(|(k, frame)| {
            let spatial = models.spatial.forward(StreamInput::Frame(frame))?;
            let temporal = temporal_scores(models, flows[k.saturating_sub(l)..k].iter().collect())?;
            models.fuse(frame.index, spatial, temporal)
        })
        .collect()
}

/// Burns a fixed cost per frame and returns uniform scores; stands in for the
/// real models when benchmarking the scheduling layer.
pub struct SyntheticScorer {
    pub cost: SyntheticCost,
}

impl FrameScorer for SyntheticScorer {
    fn score(&mut self, frame: &Frame) -> Result<FrameScores> {
        self.cost.run();
        let u = ClassScores { probs: [0.25; 4] };
        Ok(FrameScores {
            frame_index: frame.index,
            spatial: u,
            temporal: u,
            fused: u,
        })
    }
}
