//! On-disk policy bundle: per-arm weights and thresholds together with the
//! preprocessing and training settings that produced them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::Dataset;
use crate::learn::{LinearModel, Measure, Surrogate};
use crate::pipeline::Ratio;
use crate::policy::{ArmModel, ArmSuitePolicy, PolicyError, PolicyKind, StochasticPolicy, Threshold};
use crate::train::{Preprocess, SuiteConfig, TrainError, TrainedSuite};

pub const BUNDLE_FORMAT: &str = "adrank-policy/1";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot read or write bundle {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed bundle: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported bundle format {0:?}, expected {BUNDLE_FORMAT:?}")]
    Format(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub type Result<T> = std::result::Result<T, BundleError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleArm {
    pub arm: usize,
    pub label: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: Threshold,
    pub lambda: f64,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub format: String,
    pub kind: PolicyKind,
    pub epsilon: f64,
    pub preprocess: Preprocess,
    pub surrogate: Surrogate,
    pub iterations: u64,
    pub step_size_base: f64,
    pub seed: u64,
    pub measure: Measure,
    pub undersample: Option<Ratio>,
    pub lambda_grid: Vec<f64>,
    pub arms: Vec<BundleArm>,
}

impl PolicyBundle {
    pub fn new(suite: &TrainedSuite, cfg: &SuiteConfig, preprocess: Preprocess, arm_labels: &[String], epsilon: f64) -> Self {
        let arms = suite
            .policy
            .arms()
            .iter()
            .zip(&suite.arms)
            .map(|(m, s)| BundleArm {
                arm: s.arm,
                label: arm_labels.get(s.arm).cloned().unwrap_or_else(|| s.arm.to_string()),
                weights: m.model.weights.clone(),
                bias: m.model.bias,
                threshold: m.threshold,
                lambda: s.lambda,
                positives: s.positives,
                negatives: s.negatives,
            })
            .collect();
        PolicyBundle {
            format: BUNDLE_FORMAT.to_string(),
            kind: cfg.kind,
            epsilon,
            preprocess,
            surrogate: cfg.surrogate,
            iterations: cfg.iterations,
            step_size_base: cfg.step_size_base,
            seed: cfg.seed,
            measure: cfg.measure,
            undersample: cfg.undersample,
            lambda_grid: cfg.lambda_grid.clone(),
            arms,
        }
    }

    pub fn policy(&self) -> Result<ArmSuitePolicy> {
        let arms = self
            .arms
            .iter()
            .map(|a| ArmModel {
                model: LinearModel { arm: a.arm, weights: a.weights.clone(), bias: a.bias, trained: a.threshold != Threshold::Untrainable },
                threshold: a.threshold,
            })
            .collect();
        Ok(ArmSuitePolicy::new(self.kind, arms)?)
    }

    pub fn stochastic(&self) -> Result<StochasticPolicy> {
        Ok(StochasticPolicy::new(self.policy()?, self.epsilon)?)
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    /// Maps raw data into the space the models were trained in.
    pub fn prepare(&self, data: &Dataset) -> Result<Dataset> {
        Ok(self.preprocess.apply(data)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: PolicyBundle = serde_json::from_str(text)?;
        if bundle.format != BUNDLE_FORMAT {
            return Err(BundleError::Format(bundle.format));
        }
        bundle.policy()?;
        Ok(bundle)
    }

    /// Short content hash identifying the bundle in reports.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|source| BundleError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
