//! Moves data between supervised, bandit and per-arm binary forms.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BanditRecord, ContextVector, DataError, Dataset, DatasetKind};
use crate::seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("arm {0} has no positive examples")]
    NoPositives(usize),
    #[error("invalid ratio {0:?}, expected <positive>:<negative> with both parts positive")]
    InvalidRatio(String),
    #[error("zero-entropy target")]
    ZeroEntropyTarget,
    #[error("keep fraction must lie in (0, 1], got {0}")]
    InvalidKeepFraction(f64),
    #[error("bin count must be positive")]
    InvalidBins,
    #[error("conversion needs at least one arm")]
    NoArms,
    #[error("feature selection refers to feature {index} but data has dimension {dimension}")]
    SelectionOutOfRange { index: usize, dimension: usize },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionConfig {
    pub seed: u64,
    pub num_arms: usize,
}

/// Hides the true class of every record behind one uniformly drawn arm:
/// reward 1 when the draw hits the class, 0 otherwise, propensity `1/K`.
pub fn convert_supervised_to_bandit(data: &Dataset, cfg: &ConversionConfig) -> Result<Dataset> {
    let records = data.supervised()?;
    if cfg.num_arms == 0 {
        return Err(PipelineError::NoArms);
    }
    if cfg.num_arms < data.num_arms() {
        return Err(DataError::ArmOutOfRange { arm: data.num_arms() - 1, num_arms: cfg.num_arms }.into());
    }
    let k = cfg.num_arms;
    let mut rng = seed::rng(cfg.seed);
    let propensity = 1.0 / k as f64;
    let logged = records
        .iter()
        .map(|r| {
            let action = rng.random_range(0..k);
            BanditRecord { context: r.context.clone(), action, reward: u8::from(action == r.label), propensity }
        })
        .collect();
    Ok(Dataset::bandit(data.dimension(), k, logged)?)
}

/// Clicked (`positives`) and not-clicked (`negatives`) contexts for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTrainingSet {
    pub arm: usize,
    pub positives: Vec<ContextVector>,
    pub negatives: Vec<ContextVector>,
}

impl BinaryTrainingSet {
    pub fn new(arm: usize, positives: Vec<ContextVector>, negatives: Vec<ContextVector>) -> Self {
        BinaryTrainingSet { arm, positives, negatives }
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> Option<usize> {
        self.positives.first().or(self.negatives.first()).map(|c| c.len())
    }
}

/// One binary set per arm; a record only ever lands in the set of the arm
/// it was displayed with.
pub fn build_per_arm_binary_sets(data: &Dataset) -> Result<Vec<BinaryTrainingSet>> {
    let logged = data.logged()?;
    let mut sets: Vec<BinaryTrainingSet> =
        (0..data.num_arms()).map(|a| BinaryTrainingSet::new(a, Vec::new(), Vec::new())).collect();
    for r in logged {
        let set = &mut sets[r.action];
        if r.clicked() {
            set.positives.push(r.context.clone());
        } else {
            set.negatives.push(r.context.clone());
        }
    }
    Ok(sets)
}

/// Target `positive:negative` class ratio, e.g. `1:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Ratio {
    pub positive: u32,
    pub negative: u32,
}

impl Ratio {
    pub fn new(positive: u32, negative: u32) -> Self {
        assert!(positive > 0 && negative > 0, "ratio parts must be positive");
        Ratio { positive, negative }
    }
}

impl FromStr for Ratio {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || PipelineError::InvalidRatio(s.to_string());
        let (p, n) = s.split_once(':').ok_or_else(bad)?;
        let p: u32 = p.trim().parse().map_err(|_| bad())?;
        let n: u32 = n.trim().parse().map_err(|_| bad())?;
        if p == 0 || n == 0 {
            return Err(bad());
        }
        Ok(Ratio { positive: p, negative: n })
    }
}

impl TryFrom<String> for Ratio {
    type Error = PipelineError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Ratio> for String {
    fn from(r: Ratio) -> String {
        r.to_string()
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.positive, self.negative)
    }
}

/// Drops negatives uniformly at random (without replacement) until at most
/// `⌊|S+| · neg/pos⌋` remain. Positives are never touched, and the kept
/// negatives retain their original order.
pub fn undersample_negatives(set: &BinaryTrainingSet, ratio: Ratio, seed: u64) -> Result<BinaryTrainingSet> {
    if set.positives.is_empty() {
        return Err(PipelineError::NoPositives(set.arm));
    }
    let target = set.positives.len() * ratio.negative as usize / ratio.positive as usize;
    if set.negatives.len() <= target {
        return Ok(set.clone());
    }
    let mut keep = index::sample(&mut seed::rng(seed), set.negatives.len(), target).into_vec();
    keep.sort_unstable();
    Ok(BinaryTrainingSet {
        arm: set.arm,
        positives: set.positives.clone(),
        negatives: keep.into_iter().map(|i| set.negatives[i].clone()).collect(),
    })
}

/// Features kept by information-gain ranking, sorted by index, each with its
/// gain in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub dimension: usize,
    pub kept_indices: Vec<usize>,
    pub gains: Vec<f64>,
}

impl FeatureSelection {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.kept_indices.iter().map(|&i| x[i]).collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dimension() != self.dimension {
            return Err(DataError::DimensionMismatch { expected: self.dimension, found: data.dimension() }.into());
        }
        if let Some(&index) = self.kept_indices.iter().find(|&&i| i >= self.dimension) {
            return Err(PipelineError::SelectionOutOfRange { index, dimension: self.dimension });
        }
        Ok(data.map_contexts(self.kept_indices.len(), |c| self.project(c))?)
    }
}

fn entropy_bits(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `H(target) − H(target | feature binned into equal-width bins)`, in bits.
/// `targets[i] < num_classes` for every record.
pub fn information_gain(values: &[f64], targets: &[usize], num_classes: usize, bins: usize) -> f64 {
    assert_eq!(values.len(), targets.len());
    let n = values.len();
    let mut class_counts = vec![0usize; num_classes];
    for &t in targets {
        class_counts[t] += 1;
    }
    let h_target = entropy_bits(&class_counts, n);

    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = hi - lo;
    let mut joint = vec![0usize; bins * num_classes];
    for (&v, &t) in values.iter().zip(targets) {
        let b = if width > 0.0 { (((v - lo) / width * bins as f64) as usize).min(bins - 1) } else { 0 };
        joint[b * num_classes + t] += 1;
    }
    let h_conditional: f64 = joint
        .chunks(num_classes)
        .map(|row| {
            let m: usize = row.iter().sum();
            m as f64 / n as f64 * entropy_bits(row, m)
        })
        .sum();
    (h_target - h_conditional).max(0.0)
}

/// Keeps the `⌈d · keep_fraction⌉` features with the highest information
/// gain about the label (full-information data) or the reward (bandit data).
/// Ties go to the lower feature index.
pub fn information_gain_select(data: &Dataset, keep_fraction: f64, bins: usize) -> Result<FeatureSelection> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(PipelineError::InvalidKeepFraction(keep_fraction));
    }
    if bins == 0 {
        return Err(PipelineError::InvalidBins);
    }
    if data.is_empty() {
        return Err(DataError::NoRecords.into());
    }
    let num_classes = match data.kind() {
        DatasetKind::FullInformation => data.num_arms(),
        DatasetKind::Bandit => 2,
    };
    let targets: Vec<usize> = (0..data.len()).map(|i| data.target(i)).collect();
    if targets.iter().all(|&t| t == targets[0]) {
        return Err(PipelineError::ZeroEntropyTarget);
    }
    let d = data.dimension();
    let gains: Vec<f64> = (0..d)
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = data.contexts().map(|c| c[j]).collect();
            information_gain(&column, &targets, num_classes, bins)
        })
        .collect();

    let keep = crate::data::train_size(d, keep_fraction).min(d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    Ok(FeatureSelection { dimension: d, gains: kept.iter().map(|&j| gains[j]).collect(), kept_indices: kept })
}
