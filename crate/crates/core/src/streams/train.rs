use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::StreamModel;
use super::optim::{PlateauScheduler, Sgd};
use super::tensor::Tensor;
use super::{segmental_consensus, ClassScores, StreamKind};
use crate::error::{Error, Result};
use crate::videoio::ActionLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A labelled collection of videos, each of which yields the inputs whose
/// consensus is the video-level prediction.
pub trait VideoSource {
    fn len(&self) -> usize;
    fn label(&self, i: usize) -> Result<ActionLabel>;
    fn inputs(&self, i: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub batch: usize,
    pub patience: usize,
    pub lr_factor: f64,
    pub epochs: usize,
    /// 3 frames for the spatial stream, 1 stacked flow for the temporal one.
    pub samples_per_video: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-scale spatial settings.
    pub fn spatial() -> Self {
        Self {
            lr0: 5e-4,
            momentum: 0.9,
            batch: 64,
            patience: 1,
            lr_factor: 0.1,
            epochs: 30,
            samples_per_video: 3,
            seed: 0,
        }
    }

    /// Full-scale temporal settings.
    pub fn temporal() -> Self {
        Self {
            lr0: 1e-2,
            patience: 3,
            samples_per_video: 1,
            ..Self::spatial()
        }
    }

    pub fn for_kind(kind: StreamKind) -> Self {
        match kind {
            StreamKind::Spatial => Self::spatial(),
            StreamKind::Temporal => Self::temporal(),
        }
    }

    /// Desk-scale settings. One epoch over a few dozen clips is only a dozen
    /// updates, so the initial rate is higher and each plateau halves it.
    pub fn desk(kind: StreamKind) -> Self {
        let lr0 = match kind {
            StreamKind::Spatial => 0.1,
            StreamKind::Temporal => 0.1,
        };
        Self {
            lr0,
            batch: 8,
            lr_factor: 0.5,
            ..Self::for_kind(kind)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::invalid("lr0 must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.patience < 1 || self.batch < 1 {
            return Err(Error::invalid("patience and batch must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy of the augmented training predictions made during the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: StreamModel,
    pub history: Vec<EpochMetrics>,
}

/// Cross-entropy of the consensus of `inputs` against `label`, accumulating
/// `scale * dL/dθ` into `grads`.
pub(crate) fn video_loss_and_grad(
    model: &StreamModel,
    inputs: &[Tensor],
    label: ActionLabel,
    scale: f64,
    grads: Option<&mut [f64]>,
) -> Result<(f64, ClassScores)> {
    let caches = inputs
        .iter()
        .map(|x| model.forward_cached(x))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<ClassScores> = caches.iter().map(|c| c.probs).collect();
    let consensus = segmental_consensus(&probs)?;
    let y = label.index();
    let py = consensus.probs[y].max(1e-300);
    let loss = -py.ln();
    if let Some(grads) = grads {
        let n = inputs.len() as f64;
        // dL/dp_i is -1/(n p̄_y) on the true class and 0 elsewhere
        let gy = -1.0 / (n * py);
        for (x, cache) in inputs.iter().zip(&caches) {
            let p = cache.probs.probs;
            let mut dlogits = [0.0; 4];
            for (c, d) in dlogits.iter_mut().enumerate() {
                let g = if c == y { gy } else { 0.0 };
                *d = scale * p[c] * (g - p[y] * gy);
            }
            model.backward(x, cache, &dlogits, grads);
        }
    }
    Ok((loss, consensus))
}

/// Consensus prediction for one video in evaluation mode.
pub fn predict_video(
    model: &StreamModel,
    source: &dyn VideoSource,
    i: usize,
) -> Result<ClassScores> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = source.inputs(i, Mode::Eval, &mut rng)?;
    let scores = inputs
        .iter()
        .map(|x| model.forward_tensor(x))
        .collect::<Result<Vec<_>>>()?;
    segmental_consensus(&scores)
}

/// Evaluation-mode accuracy and per-video predictions.
pub fn evaluate(model: &StreamModel, source: &dyn VideoSource) -> Result<(f64, Vec<ClassScores>)> {
    if source.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut correct = 0usize;
    let mut preds = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let p = predict_video(model, source, i)?;
        if p.argmax() == source.label(i)? {
            correct += 1;
        }
        preds.push(p);
    }
    Ok((correct as f64 / source.len() as f64, preds))
}

/// Mini-batch SGD with momentum on the consensus cross-entropy, with the
/// learning rate driven by a plateau scheduler on validation accuracy (or
/// training-set evaluation accuracy when no validation set is given).
pub fn train_stream(
    model: StreamModel,
    train: &dyn VideoSource,
    val: Option<&dyn VideoSource>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sgd = Sgd::new(config.lr0, config.momentum, model.param_count())?;
    let mut sched = PlateauScheduler::new(config.lr0, config.lr_factor, config.patience)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = vec![0.0; model.param_count()];
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = sched.lr;
        sgd.lr = lr;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let label = train.label(i)?;
                let inputs = train.inputs(i, Mode::Train, &mut rng)?;
                let (loss, consensus) =
                    video_loss_and_grad(&model, &inputs, label, scale, Some(&mut grads))?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        message: format!("loss {loss} on video {i}"),
                    });
                }
                loss_sum += loss;
                if consensus.argmax() == label {
                    correct += 1;
                }
            }
            sgd.step(&mut model.params, &grads);
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: "non-finite parameters after update".into(),
                });
            }
        }
        let monitor = val.unwrap_or(train);
        let (val_accuracy, _) = evaluate(&model, monitor)?;
        sched.step(val_accuracy);
        history.push(EpochMetrics {
            epoch,
            loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy,
            lr,
        });
    }
    Ok(TrainOutcome { model, history })
}
