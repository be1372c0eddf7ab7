//! Per-arm model learning: pairwise AUC rankers trained by SGD, pointwise
//! logistic classifiers as the baseline, and threshold scores that put
//! ranker outputs for different arms on a comparable footing.

mod classifier;
mod ranker;
mod surrogate;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classifier::{classifier_objective, classifier_objective_gradient, train_logistic_classifier};
pub use ranker::{
    empirical_aucl, objective_gradient, pair_gradient, surrogate_objective, train_ranker,
};
pub use surrogate::Surrogate;
pub use threshold::{learn_threshold, measure_at, Measure};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("untrainable arm {arm}: {positives} positive and {negatives} negative examples")]
    Untrainable { arm: usize, positives: usize, negatives: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: model has {expected} weights, context has {found} features")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, LearnError>;

/// Linear scorer `w·x + bias` for one arm. Rankers never carry a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub arm: usize,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub bias: f64,
    pub trained: bool,
}

impl LinearModel {
    pub fn zeros(arm: usize, dimension: usize) -> Self {
        LinearModel { arm, weights: vec![0.0; dimension], bias: 0.0, trained: false }
    }

    pub fn from_weights(arm: usize, weights: Vec<f64>) -> Self {
        LinearModel { arm, weights, bias: 0.0, trained: true }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub lambda: f64,
    pub step_size_base: f64,
    pub seed: u64,
    pub surrogate: Surrogate,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1_000_000,
            lambda: 0.1,
            step_size_base: 1.0,
            seed: 0,
            surrogate: Surrogate::Logistic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(LearnError::Config("iterations must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LearnError::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.step_size_base > 0.0 && self.step_size_base.is_finite()) {
            return Err(LearnError::Config(format!(
                "step size base must be positive, got {}",
                self.step_size_base
            )));
        }
        Ok(())
    }

    /// `η_k = η₀ / √k` for the 1-based step `k`.
    pub fn step_size(&self, k: u64) -> f64 {
        self.step_size_base / (k as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { step_size_base: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig { step_size_base: 2.0, ..Default::default() };
        assert_eq!(cfg.step_size(1), 2.0);
        assert_eq!(cfg.step_size(4), 1.0);
    }
}
