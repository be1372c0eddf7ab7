//! Offline policy evaluation: true CTR on full-information data,
//! importance-weighted CTR with a Student-t lower confidence bound on
//! logged bandit data, regret accounting, and the sparse-click simulator.

mod regret;
pub mod special;
mod synthetic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::policy::{ArmSuitePolicy, Policy, PolicyError};

pub use regret::{regret_ledger, RegretLedger};
pub use synthetic::{generate_synthetic_bandit, ClickModel, LoggingPolicy, SyntheticBandit, SyntheticBanditSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("empty test set")]
    Empty,
    #[error("at least two values are needed for a confidence bound, got {0}")]
    TooFewSamples(usize),
    #[error("delta must lie in (0, 0.5], got {0}")]
    InvalidDelta(f64),
    #[error("unlogged propensity on record {0}")]
    UnloggedPropensity(usize),
    #[error("policy covers {policy} arms but the data has {data}")]
    ArmMismatch { policy: usize, data: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unachievable target rate {rate} for arm {arm}")]
    UnachievableRate { arm: usize, rate: f64 },
    #[error("invalid simulator spec: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    TrueCtr,
    IwCtr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub estimator: Estimator,
    pub point: f64,
    pub lcb: Option<f64>,
    pub delta: Option<f64>,
    pub n: usize,
    pub sample_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
}

/// Streaming mean and sum of squared deviations; partial results merge
/// exactly as if the values had been pushed in order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        RunningStats { n, mean, m2 }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard deviation with the `1/(n−1)` factor; 0 for fewer than two values.
    pub fn sample_std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

const CHUNK: usize = 4096;

/// Chunked parallel statistics merged in chunk order, so the result does not
/// depend on thread scheduling.
fn stats_of(values: &[f64]) -> RunningStats {
    let parts: Vec<RunningStats> = values.par_chunks(CHUNK).map(|c| c.iter().copied().collect()).collect();
    parts.iter().fold(RunningStats::default(), |acc, p| acc.merge(p))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 0.5 {
        Ok(())
    } else {
        Err(EvalError::InvalidDelta(delta))
    }
}

/// `mean − (σ/√n) · t_{1−δ, n−1}` with σ the `1/(n−1)` sample deviation.
pub fn lcb(values: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if values.len() < 2 {
        return Err(EvalError::TooFewSamples(values.len()));
    }
    Ok(lcb_from_stats(&stats_of(values), delta))
}

fn lcb_from_stats(stats: &RunningStats, delta: f64) -> f64 {
    let sigma = stats.sample_std();
    if sigma == 0.0 {
        return stats.mean();
    }
    let n = stats.count() as f64;
    let t = special::student_t_quantile(1.0 - delta, n - 1.0);
    stats.mean() - sigma / n.sqrt() * t
}

/// Fraction of test records whose correct arm the policy predicts.
pub fn true_ctr(policy: &ArmSuitePolicy, test: &Dataset) -> Result<EvaluationReport> {
    let records = test.supervised()?;
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    if policy.num_arms() != test.num_arms() {
        return Err(EvalError::ArmMismatch { policy: policy.num_arms(), data: test.num_arms() });
    }
    let hits = records
        .par_iter()
        .map(|r| policy.predict(&r.context).map(|a| if a == r.label { 1.0 } else { 0.0 }))
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    let stats = stats_of(&hits);
    Ok(EvaluationReport {
        estimator: Estimator::TrueCtr,
        point: stats.mean(),
        lcb: None,
        delta: None,
        n: hits.len(),
        sample_std: stats.sample_std(),
        policy_id: None,
        dataset_fingerprint: None,
    })
}

/// Per-record importance-weighted rewards `r · π(a|x) / propensity`,
/// optionally clipped at `clip`.
pub fn importance_weighted_values<P: Policy + Sync>(policy: &P, test: &Dataset, clip: Option<f64>) -> Result<Vec<f64>> {
    let records = test.logged()?;
    if policy.num_arms() != test.num_arms() {
        return Err(EvalError::ArmMismatch { policy: policy.num_arms(), data: test.num_arms() });
    }
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            if !(r.propensity > 0.0 && r.propensity.is_finite()) {
                return Err(EvalError::UnloggedPropensity(i));
            }
            if r.reward == 0 {
                return Ok(0.0);
            }
            let weight = policy.probability(&r.context, r.action)? / r.propensity;
            let weight = clip.map_or(weight, |c| weight.min(c));
            Ok(f64::from(r.reward) * weight)
        })
        .collect()
}

/// Importance-weighted CTR of `policy` on uniformly (or otherwise) logged
/// data, with its 1−δ lower confidence bound.
pub fn importance_weighted_ctr<P: Policy + Sync>(policy: &P, test: &Dataset, delta: f64) -> Result<EvaluationReport> {
    importance_weighted_ctr_clipped(policy, test, delta, None)
}

pub fn importance_weighted_ctr_clipped<P: Policy + Sync>(
    policy: &P,
    test: &Dataset,
    delta: f64,
    clip: Option<f64>,
) -> Result<EvaluationReport> {
    check_delta(delta)?;
    let values = importance_weighted_values(policy, test, clip)?;
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if values.len() < 2 {
        return Err(EvalError::TooFewSamples(values.len()));
    }
    let stats = stats_of(&values);
    Ok(EvaluationReport {
        estimator: Estimator::IwCtr,
        point: stats.mean(),
        lcb: Some(lcb_from_stats(&stats, delta)),
        delta: Some(delta),
        n: values.len(),
        sample_std: stats.sample_std(),
        policy_id: None,
        dataset_fingerprint: None,
    })
}
