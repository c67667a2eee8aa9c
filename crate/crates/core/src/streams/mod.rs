//! The spatial (RGB) and temporal (stacked flow) classification streams.
//!
//! Both streams share one small architecture: a `k x k` convolution with
//! softplus, global average pooling, an affine layer with `tanh`, a second
//! affine layer and a softmax over the four action classes. Backpropagation is written out by hand and checked
//! against finite differences in [`gradcheck`].

mod augment;
mod checkpoint;
pub mod gradcheck;
mod model;
mod optim;
mod sources;
mod tensor;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::videoio::ActionLabel;

pub use augment::{augment, eval_transform, AugmentConfig};
pub use checkpoint::{
    decode_model, encode_model, load_model, load_sidecar, save_model, sidecar_path, ModelSidecar,
};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckConfig, GradCheckReport};
pub use model::{
    cross_modality_init, ModelShape, ParamGroup, StreamInput, StreamKind, StreamModel,
};
pub use optim::{PlateauScheduler, Sgd};
pub use sources::{flow_tensor, ClipFlows, FlowFrontEnd, SpatialSource, TemporalSource};
pub use tensor::Tensor;
pub use train::{
    evaluate, predict_video, train_stream, EpochMetrics, Mode, TrainConfig, TrainOutcome,
    VideoSource,
};

/// Number of frames the spatial stream samples per video.
pub const SEGMENTS: usize = 3;

/// A probability vector over [`ActionLabel`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassScores {
    pub probs: [f64; ActionLabel::COUNT],
}

impl ClassScores {
    pub const UNIFORM: ClassScores = ClassScores { probs: [0.25; 4] };

    /// Accepts any vector that is a probability distribution to within `1e-6`.
    pub fn new(probs: [f64; 4]) -> Result<Self> {
        let s = Self { probs };
        if !s.is_distribution(1e-6) {
            return Err(Error::Numeric(format!(
                "{probs:?} is not a probability vector"
            )));
        }
        Ok(s)
    }

    pub fn one_hot(label: ActionLabel) -> Self {
        let mut probs = [0.0; 4];
        probs[label.index()] = 1.0;
        Self { probs }
    }

    pub fn softmax(logits: &[f64; 4]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logits {logits:?}")));
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = logits.map(|l| (l - m).exp());
        let z: f64 = e.iter().sum();
        Ok(Self {
            probs: e.map(|x| x / z),
        })
    }

    pub fn is_distribution(&self, tol: f64) -> bool {
        self.probs
            .iter()
            .all(|&p| p.is_finite() && (-tol..=1.0 + tol).contains(&p))
            && (self.probs.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Highest-probability class; ties go to the lowest index.
    pub fn argmax(&self) -> ActionLabel {
        let mut best = 0;
        for i in 1..4 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        ActionLabel::from_index(best).expect("four classes")
    }

    pub fn confidence(&self) -> f64 {
        self.probs[self.argmax().index()]
    }

    pub fn get(&self, label: ActionLabel) -> f64 {
        self.probs[label.index()]
    }
}

/// Video-level prediction from per-frame predictions: the renormalised mean.
pub fn segmental_consensus(scores: &[ClassScores]) -> Result<ClassScores> {
    if scores.is_empty() {
        return Err(Error::Empty("consensus needs at least one score vector"));
    }
    let mut acc = [0.0; 4];
    for s in scores {
        for (a, p) in acc.iter_mut().zip(s.probs) {
            *a += p;
        }
    }
    let total: f64 = acc.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric("consensus of degenerate scores".into()));
    }
    Ok(ClassScores {
        probs: acc.map(|a| a / total),
    })
}

/// One index from each of `n` equal windows covering `[0, len)`.
pub fn sample_segment_frames<R: Rng + ?Sized>(
    len: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("need at least one segment"));
    }
    if len < n {
        return Err(Error::invalid(format!(
            "clip of {len} frames cannot supply {n} segments"
        )));
    }
    Ok(segment_windows(len, n)
        .into_iter()
        .map(|(lo, hi)| rng.random_range(lo..hi))
        .collect())
}

/// Centre index of each window: the deterministic test-time counterpart.
pub fn segment_centers(len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || len < n {
        return Err(Error::invalid(format!(
            "clip of {len} frames cannot supply {n} segments"
        )));
    }
    Ok(segment_windows(len, n)
        .into_iter()
        .map(|(lo, hi)| (lo + hi - 1) / 2)
        .collect())
}

fn segment_windows(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn consensus_of_copies_is_idempotent() {
        let s = ClassScores::new([0.7, 0.1, 0.1, 0.1]).unwrap();
        let c = segmental_consensus(&[s, s, s]).unwrap();
        for i in 0..4 {
            assert!((c.probs[i] - s.probs[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn consensus_averages() {
        let c = segmental_consensus(&[
            ClassScores::one_hot(ActionLabel::Theft),
            ClassScores::one_hot(ActionLabel::Assault),
        ])
        .unwrap();
        assert_eq!(c.probs, [0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn consensus_of_one_is_itself() {
        let s = ClassScores::new([0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(segmental_consensus(&[s]).unwrap(), s);
    }

    #[test]
    fn consensus_of_nothing_fails() {
        assert!(segmental_consensus(&[]).is_err());
    }

    #[test]
    fn segment_windows_for_ninety_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let idx = sample_segment_frames(90, 3, &mut rng).unwrap();
            assert!(idx[0] < 30 && (30..60).contains(&idx[1]) && (60..90).contains(&idx[2]));
        }
    }

    #[test]
    fn three_frames_three_segments_is_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            sample_segment_frames(3, 3, &mut rng).unwrap(),
            vec![0, 1, 2]
        );
        assert!(sample_segment_frames(2, 3, &mut rng).is_err());
    }

    #[test]
    fn segment_sampling_is_reproducible() {
        let a = sample_segment_frames(117, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_segment_frames(117, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(ClassScores::UNIFORM.argmax(), ActionLabel::Theft);
        let s = ClassScores::new([0.1, 0.4, 0.4, 0.1]).unwrap();
        assert_eq!(s.argmax(), ActionLabel::Assault);
    }

    #[test]
    fn softmax_rejects_nan() {
        assert!(ClassScores::softmax(&[0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(l in proptest::array::uniform4(-500.0f64..500.0)) {
            let s = ClassScores::softmax(&l).unwrap();
            prop_assert!(s.is_distribution(1e-6));
        }

        #[test]
        fn consensus_is_permutation_invariant(
            raw in proptest::collection::vec(proptest::array::uniform4(-5.0f64..5.0), 1..6),
            rot in 0usize..6,
        ) {
            let scores: Vec<ClassScores> = raw.iter().map(|l| ClassScores::softmax(l).unwrap()).collect();
            let mut rotated = scores.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let a = segmental_consensus(&scores).unwrap();
            let b = segmental_consensus(&rotated).unwrap();
            for i in 0..4 {
                prop_assert!((a.probs[i] - b.probs[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn segment_indices_increase(len in 3usize..400, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = sample_segment_frames(len, 3, &mut rng).unwrap();
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&i| i < len));
        }
    }
}
