//! One-vs-rest SVMs trained by SMO with maximal-violating-pair selection.

use serde::{Deserialize, Serialize};

use super::{kernel_unchecked, SvmConfig};
use crate::error::{Error, Result};
use crate::streams::ClassScores;
use crate::videoio::ActionLabel;

/// Curvature floor for pairs whose kernel rows coincide.
const TAU: f64 = 1e-12;

/// One binary classifier: `f(x) = sum coef_i K(sv_i, x) + bias`, where
/// `coef_i = alpha_i * y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: u64,
    /// Training-set index of each support vector; empty after reloading.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support_index: Vec<usize>,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64], config: &SvmConfig) -> f64 {
        self.bias
            + self
                .support
                .iter()
                .zip(&self.coef)
                .map(|(sv, c)| c * kernel_unchecked(sv, x, config))
                .sum::<f64>()
    }

    fn constant(bias: f64) -> Self {
        Self {
            support: Vec::new(),
            coef: Vec::new(),
            bias,
            converged: true,
            iterations: 0,
            support_index: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub config: SvmConfig,
    pub dim: usize,
    /// One classifier per [`ActionLabel`], in label order.
    pub classes: Vec<BinarySvm>,
}

impl SvmModel {
    /// A model without support vectors that always returns `biases`.
    pub fn from_biases(config: SvmConfig, dim: usize, biases: [f64; 4]) -> Self {
        Self {
            config,
            dim,
            classes: biases.iter().map(|&b| BinarySvm::constant(b)).collect(),
        }
    }

    pub fn converged(&self) -> bool {
        self.classes.iter().all(|c| c.converged)
    }

    pub fn support_count(&self) -> usize {
        self.classes.iter().map(|c| c.support.len()).sum()
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<[f64; 4]> {
        if self.classes.len() != ActionLabel::COUNT || self.dim == 0 {
            return Err(Error::invalid("SVM model is untrained"));
        }
        if x.len() != self.dim {
            return Err(Error::dim(format!(
                "model expects {} features, got {}",
                self.dim,
                x.len()
            )));
        }
        let mut out = [0.0; 4];
        for (o, c) in out.iter_mut().zip(&self.classes) {
            *o = c.decision(x, &self.config);
        }
        Ok(out)
    }

    /// Softmax over the decision values. Monotone in them, not calibrated.
    pub fn scores(&self, x: &[f64]) -> Result<ClassScores> {
        ClassScores::softmax(&self.decision_values(x)?)
    }
}

/// Label by decision-value argmax (lowest index on ties) and its softmax
/// confidence.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(ActionLabel, f64)> {
    let scores = model.scores(x)?;
    let label = scores.argmax();
    Ok((label, scores.get(label)))
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    converged: bool,
    iterations: u64,
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `y'a = 0`, `0 <= a <= c`, with
/// `Q_ij = y_i y_j K_ij`.
fn smo(gram: &[f64], y: &[f64], c: f64, tol: f64, max_iter: u64) -> Solution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let k = |i: usize, j: usize| gram[i * n + j];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 {
                alpha[t] < c
            } else {
                alpha[t] > 0.0
            };
            let low = if y[t] > 0.0 {
                alpha[t] > 0.0
            } else {
                alpha[t] < c
            };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k(i, j);
        if y[i] != y[j] {
            let mut quad = k(i, i) + k(j, j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k(i, i) + k(j, j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
    }

    // threshold: mean over free variables, else midpoint of the feasible range
    let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    Solution {
        alpha,
        rho,
        converged,
        iterations,
    }
}

fn check_data<X: AsRef<[f64]>>(xs: &[X], ys: &[ActionLabel]) -> Result<usize> {
    if xs.len() != ys.len() {
        return Err(Error::dim(format!(
            "{} samples but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let dim = xs
        .first()
        .ok_or(Error::Empty("SVM training set"))?
        .as_ref()
        .len();
    if dim == 0 {
        return Err(Error::dim("samples have no features"));
    }
    for (i, x) in xs.iter().enumerate() {
        let x = x.as_ref();
        if x.len() != dim {
            return Err(Error::dim(format!(
                "sample {i} has {} features, expected {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "sample {i} has non-finite features"
            )));
        }
    }
    Ok(dim)
}

pub fn svm_fit<X: AsRef<[f64]>>(
    xs: &[X],
    ys: &[ActionLabel],
    config: &SvmConfig,
) -> Result<SvmModel> {
    config.validate()?;
    let dim = check_data(xs, ys)?;
    let mut present = [false; 4];
    ys.iter().for_each(|y| present[y.index()] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid("SVM training needs at least two classes"));
    }

    let n = xs.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_unchecked(xs[i].as_ref(), xs[j].as_ref(), config);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }

    let mut classes = Vec::with_capacity(ActionLabel::COUNT);
    for label in ActionLabel::ALL {
        if !present[label.index()] {
            classes.push(BinarySvm::constant(-1.0));
            continue;
        }
        let y: Vec<f64> = ys
            .iter()
            .map(|&l| if l == label { 1.0 } else { -1.0 })
            .collect();
        let sol = smo(&gram, &y, config.c, config.tol, config.max_passes);
        let support_index: Vec<usize> = (0..n).filter(|&t| sol.alpha[t] > 0.0).collect();
        classes.push(BinarySvm {
            support: support_index
                .iter()
                .map(|&t| xs[t].as_ref().to_vec())
                .collect(),
            coef: support_index.iter().map(|&t| sol.alpha[t] * y[t]).collect(),
            bias: -sol.rho,
            converged: sol.converged,
            iterations: sol.iterations,
            support_index,
        });
    }
    Ok(SvmModel {
        config: *config,
        dim,
        classes,
    })
}

/// Largest violation of the per-point margin conditions over all four
/// binary problems: `y f(x) >= 1` at `alpha = 0`, `= 1` when free and
/// `<= 1` at `alpha = C`.
pub fn kkt_violation<X: AsRef<[f64]>>(
    model: &SvmModel,
    xs: &[X],
    ys: &[ActionLabel],
) -> Result<f64> {
    check_data(xs, ys)?;
    let c = model.config.c;
    let mut worst: f64 = 0.0;
    for (label, svm) in ActionLabel::ALL.into_iter().zip(&model.classes) {
        if svm.support.len() != svm.support_index.len() {
            return Err(Error::invalid(
                "support indices are unavailable for this model",
            ));
        }
        let mut alpha = vec![0.0; xs.len()];
        for (&t, coef) in svm.support_index.iter().zip(&svm.coef) {
            alpha[t] = coef.abs();
        }
        for (t, (x, &l)) in xs.iter().zip(ys).enumerate() {
            let y = if l == label { 1.0 } else { -1.0 };
            let m = y * svm.decision(x.as_ref(), &model.config);
            let v = if alpha[t] <= 0.0 {
                1.0 - m
            } else if alpha[t] >= c {
                m - 1.0
            } else {
                (m - 1.0).abs()
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}
