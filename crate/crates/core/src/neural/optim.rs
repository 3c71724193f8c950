use serde::{Deserialize, Serialize};

use super::Param;

/// RMSprop with L2 weight decay folded into the gradient.
///
/// `g' = g + wd * p` (weights only), `acc = ρ acc + (1 - ρ) g'²`,
/// `p -= lr * g' / (√acc + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub smoothing: f64,
    pub eps: f64,
    pub weight_decay: f64,
    acc: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(smoothing: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            smoothing,
            eps,
            weight_decay,
            acc: Vec::new(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }

    pub fn step(&mut self, params: Vec<&mut Param>, lr: f64) {
        if self.acc.is_empty() {
            self.acc = params.iter().map(|p| vec![0.0; p.value().len()]).collect();
        }
        assert_eq!(self.acc.len(), params.len(), "parameter list changed between steps");
        let (rho, eps) = (self.smoothing, self.eps);
        for (p, acc) in params.into_iter().zip(&mut self.acc) {
            let wd = if p.decay { self.weight_decay } else { 0.0 };
            let (values, grad) = {
                let t = &mut p.tensor;
                (&mut t.values, t.grad.as_deref().expect("gradient allocated"))
            };
            for ((v, &g), a) in values.iter_mut().zip(grad).zip(acc.iter_mut()) {
                let g = g + wd * *v;
                *a = rho * *a + (1.0 - rho) * g * g;
                *v -= lr * g / (a.sqrt() + eps);
            }
        }
    }
}

/// Halves the learning rate after `patience` epochs without a relative
/// improvement of `threshold` in validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub best_loss: f64,
    pub epochs_since_improve: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, threshold: f64) -> Self {
        Self {
            factor,
            patience,
            threshold,
            best_loss: f64::INFINITY,
            epochs_since_improve: 0,
        }
    }

    pub fn step(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best_loss * (1.0 - self.threshold) {
            self.best_loss = val_loss;
            self.epochs_since_improve = 0;
            return lr;
        }
        self.epochs_since_improve += 1;
        if self.epochs_since_improve > self.patience {
            self.epochs_since_improve = 0;
            return lr * self.factor;
        }
        lr
    }
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        Self::new(0.5, 5, 1e-4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Continue,
    Stop,
}

/// Tracks the best validation loss and its parameter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    pub max_epochs: usize,
    pub best_loss: f64,
    /// 1-based epoch of `best_loss`.
    pub best_epoch: usize,
    pub epochs_since_improve: usize,
    pub epoch: usize,
    pub best_checkpoint: Option<Vec<Vec<f64>>>,
}

impl EarlyStopper {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        Self {
            patience,
            max_epochs,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improve: 0,
            epoch: 0,
            best_checkpoint: None,
        }
    }

    /// Records one epoch. `snapshot` is only called on a new best.
    pub fn step(&mut self, val_loss: f64, snapshot: impl FnOnce() -> Vec<Vec<f64>>) -> StopSignal {
        self.epoch += 1;
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = self.epoch;
            self.epochs_since_improve = 0;
            self.best_checkpoint = Some(snapshot());
        } else {
            self.epochs_since_improve += 1;
        }
        if self.epochs_since_improve >= self.patience || self.epoch >= self.max_epochs {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        }
    }
}

impl Default for EarlyStopper {
    fn default() -> Self {
        Self::new(20, 200)
    }
}
