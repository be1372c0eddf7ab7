//! Sparse-click bandit simulator.
//!
//! Stands in for proprietary campaign logs: only the number of offers, the
//! impression counts and the per-offer positive rates are matched. Contexts
//! are standard normal, clicks follow a per-arm logistic model whose bias is
//! calibrated by bisection to hit the requested marginal rate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::data::{BanditRecord, ContextVector, Dataset};
use crate::policy::Policy;
use crate::seed;

/// How the training log chose arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LoggingPolicy {
    #[default]
    Uniform,
    /// Context-independent arm frequencies (normalized internally).
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBanditSpec {
    pub num_arms: usize,
    pub dimension: usize,
    /// Target marginal click rate per arm, each in (0, 1).
    pub target_rates: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Standard deviation of `w_a·x` under the context distribution.
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
    #[serde(default)]
    pub logging: LoggingPolicy,
    pub seed: u64,
}

fn default_weight_scale() -> f64 {
    1.0
}

impl SyntheticBanditSpec {
    /// Five offers with the given per-offer rates, uniform logging.
    pub fn sparse(target_rates: Vec<f64>, dimension: usize, n_train: usize, n_test: usize, seed: u64) -> Self {
        SyntheticBanditSpec {
            num_arms: target_rates.len(),
            dimension,
            target_rates,
            n_train,
            n_test,
            weight_scale: default_weight_scale(),
            logging: LoggingPolicy::Uniform,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_arms == 0 {
            return Err(EvalError::Spec("at least one arm is required".into()));
        }
        if self.target_rates.len() != self.num_arms {
            return Err(EvalError::Spec(format!(
                "{} target rates for {} arms",
                self.target_rates.len(),
                self.num_arms
            )));
        }
        if !(self.weight_scale >= 0.0 && self.weight_scale.is_finite()) {
            return Err(EvalError::Spec(format!("weight scale must be non-negative, got {}", self.weight_scale)));
        }
        if let LoggingPolicy::Weighted(w) = &self.logging {
            if w.len() != self.num_arms || w.iter().any(|v| !(*v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(EvalError::Spec("logging weights must be K non-negative numbers with a positive sum".into()));
            }
        }
        for (arm, &rate) in self.target_rates.iter().enumerate() {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(EvalError::UnachievableRate { arm, rate });
            }
        }
        Ok(())
    }
}

/// Ground-truth click probabilities `σ(w_a·x + b_a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ClickModel {
    pub fn num_arms(&self) -> usize {
        self.biases.len()
    }

    pub fn click_probability(&self, arm: usize, x: &[f64]) -> f64 {
        let z: f64 = self.weights[arm].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[arm];
        sigmoid(z)
    }

    /// Expected click rate of `policy` over the given contexts:
    /// mean over `x` of `Σ_a π(a|x) · P(click | x, a)`.
    pub fn expected_ctr<P: Policy>(&self, policy: &P, contexts: &[ContextVector]) -> Result<f64> {
        let mut total = 0.0;
        for x in contexts {
            for a in 0..self.num_arms() {
                let p = policy.probability(x, a)?;
                if p > 0.0 {
                    total += p * self.click_probability(a, x);
                }
            }
        }
        Ok(total / contexts.len().max(1) as f64)
    }
}

pub struct SyntheticBandit {
    pub train: Dataset,
    pub test: Dataset,
    pub model: ClickModel,
}

fn draw_contexts<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<ContextVector> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            ContextVector::new(v).expect("normal draws are finite")
        })
        .collect()
}

/// Bias giving mean click probability `target` over `margins` (the values
/// of `w·x`), by bisection.
fn calibrate_bias(margins: &[f64], target: f64, arm: usize) -> Result<f64> {
    let rate = |b: f64| margins.iter().map(|m| sigmoid(m + b)).sum::<f64>() / margins.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if !(rate(lo) < target && rate(hi) > target) {
        return Err(EvalError::UnachievableRate { arm, rate: target });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generates a training log under `spec.logging` and a uniformly logged test
/// set, both with recorded propensities, plus the click model behind them.
pub fn generate_synthetic_bandit(spec: &SyntheticBanditSpec) -> Result<SyntheticBandit> {
    spec.validate()?;
    let (k, d) = (spec.num_arms, spec.dimension);
    let mut weight_rng = seed::derived_rng(spec.seed, "sim-weights", 0);
    let per_coord = if d > 0 { spec.weight_scale / (d as f64).sqrt() } else { 0.0 };
    let weights: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| per_coord * { let z: f64 = StandardNormal.sample(&mut weight_rng); z }).collect())
        .collect();

    let train_ctx = draw_contexts(&mut seed::derived_rng(spec.seed, "sim-train-contexts", 0), spec.n_train, d);
    let test_ctx = draw_contexts(&mut seed::derived_rng(spec.seed, "sim-test-contexts", 0), spec.n_test, d);

    // calibrate on the training contexts plus an independent draw so tiny
    // training logs still pin the bias
    let calib = draw_contexts(&mut seed::derived_rng(spec.seed, "sim-calibration", 0), 20_000, d);
    let biases = weights
        .iter()
        .enumerate()
        .map(|(a, w)| {
            let margins: Vec<f64> = calib
                .iter()
                .chain(&train_ctx)
                .map(|x| w.iter().zip(x.iter()).map(|(wi, xi)| wi * xi).sum())
                .collect();
            calibrate_bias(&margins, spec.target_rates[a], a)
        })
        .collect::<Result<Vec<f64>>>()?;
    let model = ClickModel { weights, biases };

    let train_probs: Vec<f64> = match &spec.logging {
        LoggingPolicy::Uniform => vec![1.0 / k as f64; k],
        LoggingPolicy::Weighted(w) => {
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        }
    };
    let uniform = vec![1.0 / k as f64; k];

    let log = |contexts: Vec<ContextVector>, probs: &[f64], tag: &str| -> Result<Dataset> {
        let mut rng = seed::derived_rng(spec.seed, tag, 0);
        let records = contexts
            .into_iter()
            .map(|x| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut action = k - 1;
                for (a, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc && *p > 0.0 {
                        action = a;
                        break;
                    }
                }
                let click = rng.random::<f64>() < model.click_probability(action, &x);
                BanditRecord { context: x, action, reward: u8::from(click), propensity: probs[action] }
            })
            .collect();
        Ok(Dataset::bandit(d, k, records)?)
    };
    let train = log(train_ctx, &train_probs, "sim-train-log")?;
    let test = log(test_ctx, &uniform, "sim-test-log")?;
    Ok(SyntheticBandit { train, test, model })
}
