//! Training of the full model set: both streams, then the fusion SVM on
//! stream outputs for clips each stream did not train on.

use serde::{Deserialize, Serialize};

use super::Models;
use crate::error::{Error, Result};
use crate::fusion::{
    random_search, stratified_folds, svm_fit, FusionInput, SearchResult, SearchSpace, SvmModel,
};
use crate::optflow::{stack_flows, FlowField};
use crate::streams::{
    evaluate, train_stream, AugmentConfig, ClassScores, ClipFlows, EpochMetrics, FlowFrontEnd,
    ModelShape, SpatialSource, StreamInput, StreamKind, StreamModel, TemporalSource, TrainConfig,
};
use crate::videoio::{ActionLabel, Clip};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub spatial: TrainConfig,
    pub temporal: TrainConfig,
    pub stack_len: usize,
    /// Folds used to produce held-out stream outputs for the SVM. Below 2 the
    /// SVM sees in-sample outputs of the final streams.
    pub svm_folds: usize,
    /// Spacing between the frames whose streaming outputs become SVM samples.
    pub svm_frame_stride: usize,
    pub cv_folds: usize,
    pub search_trials: usize,
    pub seed: u64,
}

impl TrainPlan {
    pub fn desk(seed: u64) -> Self {
        let mut spatial = TrainConfig::desk(StreamKind::Spatial);
        let mut temporal = TrainConfig::desk(StreamKind::Temporal);
        spatial.seed = seed;
        temporal.seed = seed.wrapping_add(1);
        Self {
            spatial,
            temporal,
            stack_len: 10,
            svm_folds: 3,
            svm_frame_stride: 20,
            cv_folds: 5,
            search_trials: 20,
            seed,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.spatial.epochs = epochs;
        self.temporal.epochs = epochs;
        self
    }

    /// The same plan with epochs stretched so that training on `subset` of
    /// `total` clips takes as many optimizer steps as training on all of them.
    fn scaled_for(&self, subset: usize, total: usize) -> Self {
        let scale = |e: usize| (e * total).div_ceil(subset.max(1));
        let mut p = self.clone();
        p.spatial.epochs = scale(self.spatial.epochs);
        p.temporal.epochs = scale(self.temporal.epochs);
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.spatial.validate()?;
        self.temporal.validate()?;
        if self.stack_len == 0 {
            return Err(Error::invalid("stack length must be at least 1"));
        }
        if self.svm_frame_stride == 0 {
            return Err(Error::invalid("SVM frame stride must be at least 1"));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid(
                "SVM cross-validation needs at least two folds",
            ));
        }
        Ok(())
    }
}

/// Stream outputs for one frame of a clip, as the live pipeline sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub label: ActionLabel,
    pub frame: usize,
    pub spatial: ClassScores,
    pub temporal: ClassScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub features: Vec<FoldScores>,
    pub search: SearchResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub spatial_history: Vec<EpochMetrics>,
    pub temporal_history: Vec<EpochMetrics>,
    pub spatial_train_accuracy: f64,
    pub temporal_train_accuracy: f64,
    pub fusion: FusionReport,
}

/// A trained spatial/temporal pair with its epoch histories.
#[derive(Debug, Clone)]
pub struct TrainedStreams {
    pub spatial: StreamModel,
    pub temporal: StreamModel,
    pub spatial_history: Vec<EpochMetrics>,
    pub temporal_history: Vec<EpochMetrics>,
}

fn labels_of(clips: &[Clip]) -> Result<Vec<ActionLabel>> {
    clips
        .iter()
        .map(|c| {
            c.label
                .ok_or_else(|| Error::invalid("training clip is unlabeled"))
        })
        .collect()
}

/// Flows between consecutive frames at the model input size, as training
/// and evaluation consume them.
pub fn training_flows(clips: &[Clip]) -> Result<Vec<ClipFlows>> {
    let s = ModelShape::spatial();
    let front = FlowFrontEnd {
        width: s.input_width,
        height: s.input_height,
        ..FlowFrontEnd::default()
    };
    clips.iter().map(|c| front.clip_flows(c)).collect()
}

/// Spatial first, then temporal with its first layer initialised from the
/// spatial one. Clips must be labeled.
pub fn train_streams(
    clips: &[Clip],
    flows: &[ClipFlows],
    plan: &TrainPlan,
) -> Result<TrainedStreams> {
    plan.validate()?;
    if clips.is_empty() {
        return Err(Error::Empty("training clips"));
    }
    if clips.len() != flows.len() {
        return Err(Error::dim(format!(
            "{} clips but {} flow sets",
            clips.len(),
            flows.len()
        )));
    }
    let spatial0 = StreamModel::init(StreamKind::Spatial, ModelShape::spatial(), plan.seed)?;
    let s = ModelShape::spatial();
    let src = SpatialSource::new(
        clips,
        AugmentConfig::for_input(s.input_width, s.input_height),
    );
    let spatial = train_stream(spatial0, &src, None, &plan.spatial)?;
    let temporal0 = StreamModel::temporal_from_spatial(&spatial.model, plan.stack_len)?;
    let tsrc = TemporalSource {
        clips: flows,
        stack_len: plan.stack_len,
    };
    let temporal = train_stream(temporal0, &tsrc, None, &plan.temporal)?;
    Ok(TrainedStreams {
        spatial: spatial.model,
        temporal: temporal.model,
        spatial_history: spatial.history,
        temporal_history: temporal.history,
    })
}

/// Stream outputs at every `stride`-th frame that has a full flow history,
/// exactly as the streaming pipeline computes them there.
pub fn frame_features(
    spatial: &StreamModel,
    temporal: &StreamModel,
    clips: &[Clip],
    flows: &[ClipFlows],
    stride: usize,
) -> Result<Vec<FoldScores>> {
    let stack_len = temporal.stack_len();
    let stride = stride.max(1);
    let mut out = Vec::new();
    for (clip, cf) in clips.iter().zip(flows) {
        let label = clip
            .label
            .ok_or_else(|| Error::invalid("clip is unlabeled"))?;
        let first = stack_len.min(clip.len().saturating_sub(1));
        for k in (first..clip.len()).step_by(stride) {
            let s = spatial.forward(StreamInput::Frame(&clip.frames[k]))?;
            let t = if k >= stack_len {
                temporal.forward(StreamInput::Flow(&cf.stack(k - stack_len, stack_len)?))?
            } else {
                let zero = FlowField::zeros(cf.width, cf.height);
                let mut fs: Vec<&FlowField> = cf.flows[..k].iter().collect();
                fs.resize(stack_len, &zero);
                temporal.forward(StreamInput::Flow(&stack_flows(&fs)?))?
            };
            out.push(FoldScores {
                label,
                frame: k,
                spatial: s,
                temporal: t,
            });
        }
    }
    Ok(out)
}

/// Fits the fusion SVM by random search on per-frame stream outputs. With
/// `plan.svm_folds >= 2` the outputs come from streams retrained without the
/// clip in question (same number of optimizer steps as the full streams);
/// otherwise from `spatial`/`temporal` directly.
pub fn train_fusion(
    clips: &[Clip],
    flows: &[ClipFlows],
    spatial: &StreamModel,
    temporal: &StreamModel,
    plan: &TrainPlan,
) -> Result<(SvmModel, FusionReport)> {
    plan.validate()?;
    let labels = labels_of(clips)?;
    let features = if plan.svm_folds >= 2 {
        let folds = stratified_folds(&labels, plan.svm_folds, plan.seed)?;
        let mut out: Vec<Option<Vec<FoldScores>>> = vec![None; clips.len()];
        for f in 0..plan.svm_folds {
            let (train, held): (Vec<usize>, Vec<usize>) =
                (0..clips.len()).partition(|&i| folds[i] != f);
            let pick = |idx: &[usize]| -> (Vec<Clip>, Vec<ClipFlows>) {
                (
                    idx.iter().map(|&i| clips[i].clone()).collect(),
                    idx.iter().map(|&i| flows[i].clone()).collect(),
                )
            };
            let (tc, tf) = pick(&train);
            let streams = train_streams(&tc, &tf, &plan.scaled_for(train.len(), clips.len()))?;
            for &i in &held {
                out[i] = Some(frame_features(
                    &streams.spatial,
                    &streams.temporal,
                    std::slice::from_ref(&clips[i]),
                    std::slice::from_ref(&flows[i]),
                    plan.svm_frame_stride,
                )?);
            }
        }
        out.into_iter()
            .flat_map(|s| s.expect("every clip is held out once"))
            .collect()
    } else {
        frame_features(spatial, temporal, clips, flows, plan.svm_frame_stride)?
    };
    let ys: Vec<ActionLabel> = features.iter().map(|s| s.label).collect();
    let xs: Vec<FusionInput> = features
        .iter()
        .map(|s| FusionInput::new(&s.spatial, &s.temporal))
        .collect();
    let search = random_search(
        &xs,
        &ys,
        &SearchSpace::default(),
        plan.search_trials,
        plan.cv_folds,
        plan.seed,
    )?;
    let svm = svm_fit(&xs, &ys, &search.best)?;
    Ok((svm, FusionReport { features, search }))
}

/// Video-level accuracy of each stream on its own training clips.
pub fn stream_accuracy(
    spatial: &StreamModel,
    temporal: &StreamModel,
    clips: &[Clip],
    flows: &[ClipFlows],
) -> Result<(f64, f64)> {
    let s = &spatial.shape;
    let src = SpatialSource::new(
        clips,
        AugmentConfig::for_input(s.input_width, s.input_height),
    );
    let tsrc = TemporalSource {
        clips: flows,
        stack_len: temporal.stack_len(),
    };
    Ok((evaluate(spatial, &src)?.0, evaluate(temporal, &tsrc)?.0))
}

/// All three stages in order.
pub fn train_models(clips: &[Clip], plan: &TrainPlan) -> Result<(Models, TrainReport)> {
    plan.validate()?;
    labels_of(clips)?;
    let flows = training_flows(clips)?;
    let full = train_streams(clips, &flows, plan)?;
    let (svm, fusion) = train_fusion(clips, &flows, &full.spatial, &full.temporal, plan)?;
    let (spatial_train_accuracy, temporal_train_accuracy) =
        stream_accuracy(&full.spatial, &full.temporal, clips, &flows)?;
    let report = TrainReport {
        spatial_history: full.spatial_history,
        temporal_history: full.temporal_history,
        spatial_train_accuracy,
        temporal_train_accuracy,
        fusion,
    };
    Ok((Models::new(full.spatial, full.temporal, svm)?, report))
}
