//! Multiplicative-weights (Hedge) learner over the parameter indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hedge weights over `m` experts with learning rate `eta`.
///
/// Weights are recomputed from the cumulative losses at every step, shifted
/// by the smallest cumulative loss so the exponentials never underflow to an
/// all-zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwuState {
    weights: Vec<f64>,
    eta: f64,
    cumulative_losses: Vec<f64>,
}

/// Learning rate `√(8 ln m / T)` that makes Hedge's average regret at most
/// `√(ln m / (2T))`.
pub fn default_eta(m: usize, horizon: usize) -> f64 {
    (8.0 * (m as f64).ln() / horizon.max(1) as f64).sqrt()
}

impl MwuState {
    pub fn new(m: usize, eta: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("MWU needs at least one expert"));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::domain(format!("learning rate must be >= 0, got {eta}")));
        }
        Ok(Self {
            weights: vec![1.0 / m as f64; m],
            eta,
            cumulative_losses: vec![0.0; m],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn cumulative_losses(&self) -> &[f64] {
        &self.cumulative_losses
    }

    /// Applies `w[i] ∝ w[i] exp(-η losses[i])`.
    pub fn update(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: losses.len(),
            });
        }
        if let Some(l) = losses.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::domain(format!("MWU loss {l} outside [0, 1]")));
        }
        for (c, l) in self.cumulative_losses.iter_mut().zip(losses) {
            *c += l;
        }
        let shift = self.cumulative_losses.iter().copied().fold(f64::INFINITY, f64::min);
        for (w, c) in self.weights.iter_mut().zip(&self.cumulative_losses) {
            *w = (-self.eta * (c - shift)).exp();
        }
        let total: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }
}
