//! Late fusion of the two streams with a degree-5 polynomial-kernel SVM,
//! plus the evaluation artefacts built on top of it.

mod checkpoint;
mod cv;
mod metrics;
mod svm;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streams::ClassScores;

pub use checkpoint::{decode_svm, encode_svm, load_svm, load_svm_sidecar, save_svm, SvmSidecar};
pub use cv::{
    kfold_cv, random_search, stratified_folds, CvReport, SearchResult, SearchSpace, Trial,
};
pub use metrics::{
    accuracy, confusion_matrix, percent_change, pr_points, ConfusionMatrix, PercentChange, PrPoint,
};
pub use svm::{kkt_violation, svm_fit, svm_predict, BinarySvm, SvmModel};
pub use synth::complementary_confusion_set;

/// Fixed polynomial degree of the fusion kernel.
pub const DEGREE: u32 = 5;

/// Spatial scores followed by temporal scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionInput {
    pub features: [f64; 8],
}

impl AsRef<[f64]> for FusionInput {
    fn as_ref(&self) -> &[f64] {
        &self.features
    }
}

impl FusionInput {
    pub fn new(spatial: &ClassScores, temporal: &ClassScores) -> Self {
        let mut features = [0.0; 8];
        features[..4].copy_from_slice(&spatial.probs);
        features[4..].copy_from_slice(&temporal.probs);
        Self { features }
    }

    pub fn validate(&self) -> Result<()> {
        for half in self.features.chunks(4) {
            let s: f64 = half.iter().sum();
            if (s - 1.0).abs() > 1e-6 || half.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Numeric(format!(
                    "fusion half {half:?} is not a distribution"
                )));
            }
        }
        Ok(())
    }

    pub fn spatial(&self) -> ClassScores {
        ClassScores {
            probs: self.features[..4].try_into().expect("4 entries"),
        }
    }

    pub fn temporal(&self) -> ClassScores {
        ClassScores {
            probs: self.features[4..].try_into().expect("4 entries"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub degree: u32,
    pub gamma: f64,
    pub coef0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub tol: f64,
    /// Upper bound on SMO pair updates per binary problem.
    pub max_passes: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            degree: DEGREE,
            gamma: 1.0,
            coef0: 1.0,
            c: 1.0,
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree != DEGREE {
            return Err(Error::invalid(format!(
                "kernel degree is fixed at {DEGREE}, got {}",
                self.degree
            )));
        }
        if !(self.gamma > 0.0 && self.c > 0.0 && self.tol > 0.0) || !self.coef0.is_finite() {
            return Err(Error::invalid(format!(
                "gamma ({}), C ({}) and tol ({}) must be positive",
                self.gamma, self.c, self.tol
            )));
        }
        Ok(())
    }
}

/// `(gamma * <x, y> + coef0)^5`.
pub fn poly_kernel(x: &[f64], y: &[f64], config: &SvmConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "kernel inputs have {} and {} entries",
            x.len(),
            y.len()
        )));
    }
    Ok(kernel_unchecked(x, y, config))
}

pub(crate) fn kernel_unchecked(x: &[f64], y: &[f64], config: &SvmConfig) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (config.gamma * dot + config.coef0).powi(DEGREE as i32)
}
