use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stochastic gradient descent with classical momentum:
/// `v ← momentum·v − lr·g`, `θ ← θ + v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, params: usize) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate {lr} must be positive"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "momentum {momentum} must lie in [0, 1)"
            )));
        }
        Ok(Self {
            lr,
            momentum,
            velocity: vec![0.0; params],
        })
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = self.momentum * *v - self.lr * g;
            *p += *v;
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }
}

/// Multiplies the learning rate by `factor` once the monitored metric (higher
/// is better) has failed to improve for more than `patience` consecutive
/// epochs, then starts counting again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Result<Self> {
        if patience < 1 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::invalid(format!(
                "decay factor {factor} must lie in (0, 1)"
            )));
        }
        Ok(Self {
            lr,
            factor,
            patience,
            best: None,
            bad_epochs: 0,
        })
    }

    /// Records one epoch's metric; returns `true` if the rate was decayed.
    pub fn step(&mut self, metric: f64) -> bool {
        match self.best {
            Some(b) if metric <= b => self.bad_epochs += 1,
            _ => {
                self.best = Some(metric);
                self.bad_epochs = 0;
            }
        }
        if self.bad_epochs > self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            true
        } else {
            false
        }
    }
}
