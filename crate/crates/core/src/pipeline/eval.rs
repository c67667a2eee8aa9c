//! Held-out evaluation of a trained model set, scored the way the live
//! pipeline scores frames.

use serde::{Deserialize, Serialize};

use super::{score_clip_offline, Models};
use crate::error::{Error, Result};
use crate::fusion::{accuracy, confusion_matrix, percent_change, ConfusionMatrix, PercentChange};
use crate::streams::ClassScores;
use crate::videoio::{ActionLabel, Clip, SkipPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub clips: usize,
    pub frames: usize,
    pub spatial: ViewReport,
    pub temporal: ViewReport,
    pub fused: ViewReport,
    /// Fused accuracy over individual frames rather than whole clips.
    pub fused_frame_accuracy: Option<f64>,
    /// Per-class change in correct clips, one stream to the fused output.
    pub spatial_to_fused: Vec<PercentChange>,
    pub temporal_to_fused: Vec<PercentChange>,
}

fn mean(scores: &[ClassScores]) -> ClassScores {
    let mut probs = [0.0; 4];
    for s in scores {
        for (p, q) in probs.iter_mut().zip(s.probs) {
            *p += q;
        }
    }
    let n = scores.len().max(1) as f64;
    ClassScores {
        probs: probs.map(|p| p / n),
    }
}

fn view(truths: &[ActionLabel], preds: &[ActionLabel]) -> Result<ViewReport> {
    let confusion = confusion_matrix(truths, preds)?;
    Ok(ViewReport {
        accuracy: accuracy(&confusion)?,
        confusion,
    })
}

fn correct(v: &ViewReport) -> Vec<i64> {
    v.confusion
        .per_class_correct()
        .iter()
        .map(|&c| c as i64)
        .collect()
}

/// Clip labels are the argmax of mean per-frame scores over every
/// `stride`-th frame from the first one with a full flow history.
pub fn evaluate_models(models: &Models, clips: &[Clip], stride: usize) -> Result<EvalReport> {
    if clips.is_empty() {
        return Err(Error::Empty("evaluation clips"));
    }
    let stride = stride.max(1);
    let l = models.temporal.stack_len();
    let mut truths = Vec::new();
    let mut picks: [Vec<ActionLabel>; 3] = Default::default();
    let (mut frames, mut frame_hits) = (0usize, 0usize);
    for clip in clips {
        let label = clip
            .label
            .ok_or_else(|| Error::invalid("evaluation clip is unlabeled"))?;
        let scored = score_clip_offline(models, clip, SkipPolicy::none(), false)?;
        let first = l.min(scored.len() - 1);
        let kept: Vec<_> = scored[first..].iter().step_by(stride).collect();
        frames += kept.len();
        frame_hits += kept.iter().filter(|s| s.fused.argmax() == label).count();
        truths.push(label);
        let views: [Vec<ClassScores>; 3] = [
            kept.iter().map(|s| s.spatial).collect(),
            kept.iter().map(|s| s.temporal).collect(),
            kept.iter().map(|s| s.fused).collect(),
        ];
        for (p, v) in picks.iter_mut().zip(&views) {
            p.push(mean(v).argmax());
        }
    }
    let [s, t, f] = &picks;
    let mut report = EvalReport::from_predictions(&truths, s, t, f)?;
    report.frames = frames;
    report.fused_frame_accuracy = Some(frame_hits as f64 / frames as f64);
    Ok(report)
}

impl EvalReport {
    /// Report over samples already classified by each view.
    pub fn from_predictions(
        truths: &[ActionLabel],
        spatial: &[ActionLabel],
        temporal: &[ActionLabel],
        fused: &[ActionLabel],
    ) -> Result<Self> {
        let (spatial, temporal, fused) = (
            view(truths, spatial)?,
            view(truths, temporal)?,
            view(truths, fused)?,
        );
        Ok(EvalReport {
            clips: truths.len(),
            frames: 0,
            spatial_to_fused: percent_change(&correct(&spatial), &correct(&fused))?,
            temporal_to_fused: percent_change(&correct(&temporal), &correct(&fused))?,
            fused_frame_accuracy: None,
            spatial,
            temporal,
            fused,
        })
    }
}
