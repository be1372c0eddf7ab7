//! Trains a full suite of per-arm models from bandit data and assembles the
//! deterministic policy, choosing λ from a grid on a held-out slice.

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{split_train_test, DataError, Dataset, Standardizer};
use crate::eval::{importance_weighted_ctr, EvalError};
use crate::learn::{learn_threshold, train_logistic_classifier, train_ranker, LearnError, Measure, Surrogate, TrainConfig};
use crate::pipeline::{
    build_per_arm_binary_sets, information_gain_select, undersample_negatives, BinaryTrainingSet, FeatureSelection,
    PipelineError, Ratio,
};
use crate::policy::{ArmModel, ArmSuitePolicy, PolicyError, PolicyKind};
use crate::seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no arm has both positive and negative examples")]
    NoTrainableArms,
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub kind: PolicyKind,
    pub lambda_grid: Vec<f64>,
    pub iterations: u64,
    pub step_size_base: f64,
    pub surrogate: Surrogate,
    pub measure: Measure,
    pub undersample: Option<Ratio>,
    /// Share of the training data held out to compare grid values.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            kind: PolicyKind::Ranker,
            lambda_grid: vec![0.01, 0.1, 1.0, 10.0],
            iterations: 1_000_000,
            step_size_base: 1.0,
            surrogate: Surrogate::Logistic,
            measure: Measure::F1,
            undersample: None,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(TrainError::Config("lambda grid is empty".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TrainError::Config(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        for &lambda in &self.lambda_grid {
            self.train_config(lambda, 0).validate()?;
        }
        Ok(())
    }

    fn train_config(&self, lambda: f64, arm: usize) -> TrainConfig {
        let tag = match self.kind {
            PolicyKind::Ranker => "train-ranker",
            PolicyKind::Classifier => "train-classifier",
        };
        TrainConfig {
            iterations: self.iterations,
            lambda,
            step_size_base: self.step_size_base,
            seed: seed::derive(self.seed, tag, arm as u64),
            surrogate: self.surrogate,
        }
    }
}

/// Per-arm bookkeeping written into bundles and logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: usize,
    pub positives: usize,
    pub negatives: usize,
    pub negatives_before_undersampling: usize,
    pub lambda: f64,
    pub trained: bool,
}

/// Validation score of one grid value; `None` when it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedSuite {
    pub policy: ArmSuitePolicy,
    pub lambda: f64,
    pub arms: Vec<ArmSummary>,
    pub validation: Vec<LambdaScore>,
}

/// Per-arm sets with optional negative undersampling. Arms without positives
/// are left as they are; they are excluded at fit time.
pub fn prepare_sets(data: &Dataset, undersample: Option<Ratio>, master: u64) -> Result<Vec<(BinaryTrainingSet, usize)>> {
    let sets = build_per_arm_binary_sets(data)?;
    sets.into_par_iter()
        .map(|set| {
            let before = set.negatives.len();
            match undersample {
                Some(ratio) if !set.positives.is_empty() => {
                    let s = seed::derive(master, "undersample", set.arm as u64);
                    Ok((undersample_negatives(&set, ratio, s)?, before))
                }
                _ => Ok((set, before)),
            }
        })
        .collect()
}

fn fit_arm(set: &BinaryTrainingSet, dimension: usize, cfg: &SuiteConfig, lambda: f64) -> Result<ArmModel> {
    if set.positives.is_empty() || set.negatives.is_empty() {
        return Ok(ArmModel::untrainable(set.arm, dimension));
    }
    let tc = cfg.train_config(lambda, set.arm);
    Ok(match cfg.kind {
        PolicyKind::Ranker => {
            let model = train_ranker(set, &tc)?;
            let threshold = learn_threshold(&model, set, cfg.measure)?;
            ArmModel::trained(model, threshold)
        }
        PolicyKind::Classifier => ArmModel::trained(train_logistic_classifier(set, &tc)?, 0.0),
    })
}

/// Trains every arm with one λ; arms lacking either side are excluded.
pub fn fit_arms(
    sets: &[(BinaryTrainingSet, usize)],
    dimension: usize,
    cfg: &SuiteConfig,
    lambda: f64,
) -> Result<(ArmSuitePolicy, Vec<ArmSummary>)> {
    let arms = sets
        .par_iter()
        .map(|(set, _)| fit_arm(set, dimension, cfg, lambda))
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<ArmSummary> = sets
        .iter()
        .zip(&arms)
        .map(|((set, before), model)| ArmSummary {
            arm: set.arm,
            positives: set.positives.len(),
            negatives: set.negatives.len(),
            negatives_before_undersampling: *before,
            lambda,
            trained: !model.is_excluded(),
        })
        .collect();
    if arms.iter().all(ArmModel::is_excluded) {
        return Err(TrainError::NoTrainableArms);
    }
    Ok((ArmSuitePolicy::new(cfg.kind, arms)?, summaries))
}

/// Validation IW-CTR of the deterministic policy for each grid value.
fn score_grid(data: &Dataset, cfg: &SuiteConfig) -> Result<Vec<LambdaScore>> {
    let split_seed = seed::derive(cfg.seed, "validation-split", 0);
    let (fit, held_out) = split_train_test(data, 1.0 - cfg.validation_fraction, split_seed)?;
    if held_out.len() < 2 {
        return Ok(cfg.lambda_grid.iter().map(|&lambda| LambdaScore { lambda, score: None }).collect());
    }
    let sets = prepare_sets(&fit, cfg.undersample, cfg.seed)?;
    cfg.lambda_grid
        .iter()
        .map(|&lambda| {
            let score = match fit_arms(&sets, data.dimension(), cfg, lambda) {
                Ok((policy, _)) => Some(importance_weighted_ctr(&policy, &held_out, 0.5)?.point),
                Err(TrainError::NoTrainableArms) => None,
                Err(e) => return Err(e),
            };
            debug!("{} lambda={lambda} validation iw-ctr={score:?}", cfg.kind);
            Ok(LambdaScore { lambda, score })
        })
        .collect()
}

/// First grid value with the highest score, falling back to the first value
/// when nothing could be scored.
fn pick_lambda(scores: &[LambdaScore]) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for s in scores {
        if let Some(v) = s.score {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((s.lambda, v));
            }
        }
    }
    best.map_or(scores[0].lambda, |(l, _)| l)
}

/// Trains a suite on bandit data. With more than one grid value, λ is chosen
/// on a held-out slice and the suite is then refit on all of `data`.
pub fn train_suite(data: &Dataset, cfg: &SuiteConfig) -> Result<TrainedSuite> {
    cfg.validate()?;
    data.logged()?;
    let validation = if cfg.lambda_grid.len() > 1 {
        score_grid(data, cfg)?
    } else {
        vec![LambdaScore { lambda: cfg.lambda_grid[0], score: None }]
    };
    let lambda = pick_lambda(&validation);
    let sets = prepare_sets(data, cfg.undersample, cfg.seed)?;
    let (policy, arms) = fit_arms(&sets, data.dimension(), cfg, lambda)?;
    for a in &arms {
        if a.trained {
            info!(
                "{} arm {}: {} positives, {} negatives ({} before undersampling), lambda {}",
                cfg.kind,
                a.arm + 1,
                a.positives,
                a.negatives,
                a.negatives_before_undersampling,
                a.lambda
            );
        } else {
            warn!(
                "{} arm {} is untrainable ({} positives, {} negatives) and is excluded",
                cfg.kind,
                a.arm + 1,
                a.positives,
                a.negatives
            );
        }
    }
    Ok(TrainedSuite { policy, lambda, arms, validation })
}

/// Feature selection and standardization fitted on training data and replayed
/// on anything evaluated later. Selection runs first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Preprocess {
    pub input_dimension: usize,
    #[serde(default)]
    pub selection: Option<FeatureSelection>,
    #[serde(default)]
    pub standardizer: Option<Standardizer>,
}

impl Preprocess {
    pub fn identity(dimension: usize) -> Self {
        Preprocess { input_dimension: dimension, selection: None, standardizer: None }
    }

    pub fn fit(train: &Dataset, keep_fraction: Option<f64>, bins: usize, standardize: bool) -> Result<Self> {
        let selection = keep_fraction.map(|f| information_gain_select(train, f, bins)).transpose()?;
        let standardizer = if standardize {
            let selected = match &selection {
                Some(s) => s.apply(train)?,
                None => train.clone(),
            };
            Some(Standardizer::fit(&selected))
        } else {
            None
        };
        Ok(Preprocess { input_dimension: train.dimension(), selection, standardizer })
    }

    pub fn output_dimension(&self) -> usize {
        self.selection.as_ref().map_or(self.input_dimension, |s| s.kept_indices.len())
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let x = match &self.selection {
            Some(s) => s.project(x),
            None => x.to_vec(),
        };
        match &self.standardizer {
            Some(s) => s.transform(&x),
            None => x,
        }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dimension() != self.input_dimension {
            return Err(DataError::DimensionMismatch { expected: self.input_dimension, found: data.dimension() }.into());
        }
        let selected = match &self.selection {
            Some(s) => s.apply(data)?,
            None => data.clone(),
        };
        Ok(match &self.standardizer {
            Some(s) => s.apply(&selected)?,
            None => selected,
        })
    }
}
