//! Stratified k-fold cross-validation and randomized hyperparameter search.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::svm::{svm_fit, svm_predict};
use super::SvmConfig;
use crate::error::{Error, Result};
use crate::videoio::ActionLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Fold index per sample. Each class is shuffled and dealt round-robin,
/// continuing the deal across classes, so fold sizes differ by at most one.
pub fn stratified_folds(ys: &[ActionLabel], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least two folds"));
    }
    if ys.len() < k {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {k} folds",
            ys.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; ys.len()];
    let mut next = 0;
    for label in ActionLabel::ALL {
        let mut idx: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == label).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

pub fn kfold_cv<X: AsRef<[f64]>>(
    xs: &[X],
    ys: &[ActionLabel],
    config: &SvmConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    if xs.len() != ys.len() {
        return Err(Error::dim(format!(
            "{} samples but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let folds = stratified_folds(ys, k, seed)?;
    let mut accs = Vec::with_capacity(k);
    for f in 0..k {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..xs.len()).partition(|&i| folds[i] != f);
        let tx: Vec<&[f64]> = train.iter().map(|&i| xs[i].as_ref()).collect();
        let ty: Vec<ActionLabel> = train.iter().map(|&i| ys[i]).collect();
        let model = svm_fit(&tx, &ty, config)?;
        let mut correct = 0;
        for &i in &test {
            if svm_predict(&model, xs[i].as_ref())?.0 == ys[i] {
                correct += 1;
            }
        }
        accs.push(correct as f64 / test.len() as f64);
    }
    let mean = accs.iter().sum::<f64>() / k as f64;
    let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    Ok(CvReport {
        fold_accuracies: accs,
        mean,
        std,
    })
}

/// Sampling ranges; `gamma` and `c` are drawn log-uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub gamma: (f64, f64),
    pub c: (f64, f64),
    pub coef0: Vec<f64>,
    pub tol: f64,
    pub max_passes: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let base = SvmConfig::default();
        Self {
            gamma: (1e-2, 1e1),
            c: (1e-1, 1e2),
            coef0: vec![0.0, 1.0],
            tol: base.tol,
            max_passes: base.max_passes,
        }
    }
}

impl SearchSpace {
    fn sample(&self, rng: &mut ChaCha8Rng) -> SvmConfig {
        let log_uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo.ln()..hi.ln()).exp()
            } else {
                lo
            }
        };
        let gamma = log_uniform(rng, self.gamma);
        let c = log_uniform(rng, self.c);
        let coef0 = self.coef0[rng.random_range(0..self.coef0.len())];
        SvmConfig {
            gamma,
            c,
            coef0,
            tol: self.tol,
            max_passes: self.max_passes,
            ..SvmConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: SvmConfig,
    pub cv: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: SvmConfig,
    pub best_score: f64,
    pub trials: Vec<Trial>,
}

/// Scores `n_trials` sampled configurations by k-fold CV on shared folds and
/// returns the first best one.
pub fn random_search<X: AsRef<[f64]>>(
    xs: &[X],
    ys: &[ActionLabel],
    space: &SearchSpace,
    n_trials: usize,
    k: usize,
    seed: u64,
) -> Result<SearchResult> {
    if n_trials < 1 {
        return Err(Error::invalid("random search needs at least one trial"));
    }
    if space.coef0.is_empty() {
        return Err(Error::invalid("coef0 choices are empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let config = space.sample(&mut rng);
        let cv = kfold_cv(xs, ys, &config, k, seed)?;
        trials.push(Trial { config, cv });
    }
    let best = trials.iter().enumerate().fold(
        0,
        |b, (i, t)| if t.cv.mean > trials[b].cv.mean { i } else { b },
    );
    Ok(SearchResult {
        best: trials[best].config,
        best_score: trials[best].cv.mean,
        trials,
    })
}
