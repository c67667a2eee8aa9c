//! Finite-difference check of the hand-written backward pass.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ParamGroup, StreamModel};
use super::tensor::Tensor;
use super::train::video_loss_and_grad;
use crate::error::{Error, Result};
use crate::videoio::ActionLabel;

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor so that parameters with vanishing gradient compare by
/// absolute difference.
pub const REL_FLOOR: f64 = 1e-7;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
    /// Multiplies the analytic gradient before comparison; anything other
    /// than 1 should make the check fail.
    pub analytic_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            samples: MIN_SAMPLES,
            step: FD_STEP,
            seed: 0,
            analytic_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Parameters drawn from every group, small groups first so that their
/// shortfall is made up by the larger ones.
fn sample_params(model: &StreamModel, samples: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut ranges: Vec<_> = ParamGroup::ALL
        .iter()
        .map(|&g| model.group_range(g))
        .collect();
    ranges.sort_by_key(|r| r.len());
    let mut picked = Vec::with_capacity(samples);
    for (gi, range) in ranges.iter().enumerate() {
        let quota = (samples - picked.len()).div_ceil(ranges.len() - gi);
        let take = quota.min(range.len());
        picked.extend(
            sample(rng, range.len(), take)
                .into_iter()
                .map(|i| range.start + i),
        );
    }
    picked
}

pub fn gradient_check(
    model: &StreamModel,
    inputs: &[Tensor],
    label: ActionLabel,
) -> Result<GradCheckReport> {
    gradient_check_with(model, inputs, label, &GradCheckConfig::default())
}

pub fn gradient_check_with(
    model: &StreamModel,
    inputs: &[Tensor],
    label: ActionLabel,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !model.is_finite() {
        return Err(Error::Numeric("gradient check needs finite weights".into()));
    }
    let mut grads = vec![0.0; model.param_count()];
    video_loss_and_grad(model, inputs, label, 1.0, Some(&mut grads))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = sample_params(model, config.samples, &mut rng);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_param: 0,
    };
    for &p in &params {
        let orig = probe.params[p];
        probe.params[p] = orig + config.step;
        let (up, _) = video_loss_and_grad(&probe, inputs, label, 1.0, None)?;
        probe.params[p] = orig - config.step;
        let (down, _) = video_loss_and_grad(&probe, inputs, label, 1.0, None)?;
        probe.params[p] = orig;
        let numeric = (up - down) / (2.0 * config.step);
        let err = relative_error(grads[p] * config.analytic_scale, numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.checked == 1 {
            report.max_rel_error = err;
            report.worst_param = p;
        }
    }
    Ok(report)
}
