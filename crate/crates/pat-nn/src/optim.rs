//! SGD with velocity-form momentum.

use pat_core::scalar::{c, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.99,
            batch_size: 1,
            epochs: 60,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(invalid("batch size and epochs must be >= 1"));
        }
        Ok(())
    }
}

/// `v <- beta v - eta g; w <- w + v`, elementwise over one parameter buffer.
pub fn sgd_momentum_step<S: Scalar>(
    weights: &mut [S],
    grads: &[S],
    velocity: &mut [S],
    config: &TrainConfig,
) -> Result<()> {
    if weights.len() != grads.len() || weights.len() != velocity.len() {
        return Err(shape(format!(
            "optimizer buffers disagree: {} weights, {} grads, {} velocity",
            weights.len(),
            grads.len(),
            velocity.len()
        )));
    }
    let eta = c::<S>(config.learning_rate);
    let beta = c::<S>(config.momentum);
    for ((w, &g), v) in weights.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = beta * *v - eta * g;
        *w += *v;
        if !w.is_finite() {
            return Err(NnError::Diverged("non-finite weight after update".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_gradient_step() {
        let cfg = TrainConfig {
            momentum: 0.0,
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut w = vec![1.0f64, -2.0];
        let mut v = vec![0.0; 2];
        sgd_momentum_step(&mut w, &[0.5, -1.0], &mut v, &cfg).unwrap();
        assert!((w[0] - 0.95).abs() < 1e-15);
        assert!((w[1] + 1.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_coasts() {
        let cfg = TrainConfig {
            momentum: 0.9,
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut w = vec![1.0f64];
        let mut v = vec![0.5f64];
        sgd_momentum_step(&mut w, &[0.0], &mut v, &cfg).unwrap();
        assert!((v[0] - 0.45).abs() < 1e-15);
        assert!((w[0] - 1.45).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_hand_recursion() {
        // E(w) = w^2 / 2, grad = w; eta = 0.1, beta = 0.5, w0 = 1, v0 = 0
        // v1 = -0.1, w1 = 0.9; v2 = 0.5(-0.1) - 0.1(0.9) = -0.14, w2 = 0.76
        let cfg = TrainConfig {
            momentum: 0.5,
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut w = vec![1.0f64];
        let mut v = vec![0.0f64];
        let g = w[0];
        sgd_momentum_step(&mut w, &[g], &mut v, &cfg).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-15);
        let g = w[0];
        sgd_momentum_step(&mut w, &[g], &mut v, &cfg).unwrap();
        assert!((w[0] - 0.76).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }
}
