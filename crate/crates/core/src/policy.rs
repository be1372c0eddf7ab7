//! Recommendation policies assembled from per-arm linear models.
//!
//! A ranker suite picks the arm with the highest normalized score
//! `w_a·x − s_a`; a classifier suite (one-vs-all) picks the highest raw
//! classifier score. Either can be wrapped in ε-greedy exploration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::LinearModel;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("context has dimension {found}, policy expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("every arm is untrainable")]
    NoActiveArms,
    #[error("policy needs at least one arm")]
    Empty,
    #[error("arm models must be listed in arm order: position {position} holds arm {arm}")]
    ArmOrder { position: usize, arm: usize },
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("no arms to explore")]
    NoArmsToExplore,
    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    #[error("unknown policy kind {0:?}")]
    UnknownKind(String),
}

pub type Result<T> = std::result::Result<T, PolicyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Ranker,
    Classifier,
}

impl PolicyKind {
    /// Display name used in reports.
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ranker => "linear-ranker",
            PolicyKind::Classifier => "linear-classifier",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranker" | "linear-ranker" => Ok(PolicyKind::Ranker),
            "classifier" | "linear-classifier" => Ok(PolicyKind::Classifier),
            other => Err(PolicyError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Ranker => "ranker",
            PolicyKind::Classifier => "classifier",
        })
    }
}

/// Per-arm threshold score, or the marker for an arm that had nothing to
/// learn from. Serialized as a number or the string `"untrainable"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub enum Threshold {
    Score(f64),
    Untrainable,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Score(f64),
    Tag(String),
}

impl TryFrom<ThresholdRepr> for Threshold {
    type Error = String;

    fn try_from(r: ThresholdRepr) -> std::result::Result<Self, String> {
        match r {
            ThresholdRepr::Score(s) => Ok(Threshold::Score(s)),
            ThresholdRepr::Tag(t) if t == "untrainable" => Ok(Threshold::Untrainable),
            ThresholdRepr::Tag(t) => Err(format!("unknown threshold marker {t:?}")),
        }
    }
}

impl From<Threshold> for ThresholdRepr {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::Score(s) => ThresholdRepr::Score(s),
            Threshold::Untrainable => ThresholdRepr::Tag("untrainable".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub model: LinearModel,
    pub threshold: Threshold,
}

impl ArmModel {
    pub fn trained(model: LinearModel, threshold: f64) -> Self {
        ArmModel { model, threshold: Threshold::Score(threshold) }
    }

    pub fn untrainable(arm: usize, dimension: usize) -> Self {
        ArmModel { model: LinearModel::zeros(arm, dimension), threshold: Threshold::Untrainable }
    }

    pub fn is_excluded(&self) -> bool {
        self.threshold == Threshold::Untrainable
    }
}

/// Deterministic context → arm map built from K per-arm models.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSuitePolicy {
    kind: PolicyKind,
    dimension: usize,
    arms: Vec<ArmModel>,
    excluded: BTreeSet<usize>,
}

impl ArmSuitePolicy {
    pub fn new(kind: PolicyKind, arms: Vec<ArmModel>) -> Result<Self> {
        let first = arms.first().ok_or(PolicyError::Empty)?;
        let dimension = first.model.dimension();
        for (position, a) in arms.iter().enumerate() {
            if a.model.arm != position {
                return Err(PolicyError::ArmOrder { position, arm: a.model.arm });
            }
            if a.model.dimension() != dimension {
                return Err(PolicyError::DimensionMismatch { expected: dimension, found: a.model.dimension() });
            }
        }
        let excluded: BTreeSet<usize> = arms.iter().filter(|a| a.is_excluded()).map(|a| a.model.arm).collect();
        if excluded.len() == arms.len() {
            return Err(PolicyError::NoActiveArms);
        }
        Ok(ArmSuitePolicy { kind, dimension, arms, excluded })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn arms(&self) -> &[ArmModel] {
        &self.arms
    }

    pub fn excluded(&self) -> &BTreeSet<usize> {
        &self.excluded
    }

    /// Score compared across arms, `None` for excluded arms.
    pub fn normalized_score(&self, arm: usize, x: &[f64]) -> Option<f64> {
        let a = &self.arms[arm];
        match (self.kind, a.threshold) {
            (_, Threshold::Untrainable) => None,
            (PolicyKind::Ranker, Threshold::Score(s)) => Some(a.model.score(x) - s),
            (PolicyKind::Classifier, Threshold::Score(_)) => Some(a.model.score(x)),
        }
    }

    /// Arm with the highest normalized score; ties go to the smallest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dimension {
            return Err(PolicyError::DimensionMismatch { expected: self.dimension, found: x.len() });
        }
        let mut best: Option<(usize, f64)> = None;
        for arm in 0..self.arms.len() {
            if let Some(s) = self.normalized_score(arm, x) {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((arm, s));
                }
            }
        }
        Ok(best.expect("at least one active arm").0)
    }
}

/// ε-greedy wrapper: `1 − ε` on the greedy arm and `ε/(K−1)` on every
/// other arm, excluded ones included.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    base: ArmSuitePolicy,
    epsilon: f64,
}

impl StochasticPolicy {
    pub fn new(base: ArmSuitePolicy, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(PolicyError::InvalidEpsilon(epsilon));
        }
        let k = base.num_arms();
        if k == 1 && epsilon > 0.0 {
            return Err(PolicyError::NoArmsToExplore);
        }
        if k > 1 && epsilon > (k - 1) as f64 / k as f64 {
            log::warn!("epsilon {epsilon} exceeds (K-1)/K; the greedy arm becomes the least likely choice");
        }
        Ok(StochasticPolicy { base, epsilon })
    }

    pub fn base(&self) -> &ArmSuitePolicy {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn action_distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        let greedy = self.base.predict(x)?;
        let k = self.base.num_arms();
        let other = if k > 1 { self.epsilon / (k - 1) as f64 } else { 0.0 };
        Ok((0..k).map(|a| if a == greedy { 1.0 - self.epsilon } else { other }).collect())
    }

    /// One draw from [`Self::action_distribution`] using the caller's stream.
    pub fn sample_action<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<usize> {
        let dist = self.action_distribution(x)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (a, p) in dist.iter().enumerate() {
            if *p > 0.0 {
                last_positive = a;
            }
            acc += p;
            if u < acc {
                return Ok(a);
            }
        }
        // rounding left u above the accumulated total
        Ok(last_positive)
    }
}

/// Anything that assigns probabilities to arms given a context.
pub trait Policy {
    fn num_arms(&self) -> usize;
    fn probability(&self, x: &[f64], arm: usize) -> Result<f64>;
}

impl Policy for ArmSuitePolicy {
    fn num_arms(&self) -> usize {
        self.arms.len()
    }

    fn probability(&self, x: &[f64], arm: usize) -> Result<f64> {
        check_arm(arm, self.arms.len())?;
        Ok(if self.predict(x)? == arm { 1.0 } else { 0.0 })
    }
}

impl Policy for StochasticPolicy {
    fn num_arms(&self) -> usize {
        self.base.num_arms()
    }

    fn probability(&self, x: &[f64], arm: usize) -> Result<f64> {
        let k = self.base.num_arms();
        check_arm(arm, k)?;
        let greedy = self.base.predict(x)?;
        Ok(if arm == greedy {
            1.0 - self.epsilon
        } else if k > 1 {
            self.epsilon / (k - 1) as f64
        } else {
            0.0
        })
    }
}

fn check_arm(arm: usize, num_arms: usize) -> Result<()> {
    if arm >= num_arms {
        Err(PolicyError::ArmOutOfRange { arm, num_arms })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    /// Ranker suite whose arm `a` scores `x[a]` and has threshold `t[a]`.
    fn coordinate_suite(kind: PolicyKind, thresholds: &[Option<f64>]) -> ArmSuitePolicy {
        let k = thresholds.len();
        let arms = thresholds
            .iter()
            .enumerate()
            .map(|(a, t)| {
                let mut w = vec![0.0; k];
                w[a] = 1.0;
                match t {
                    Some(s) => ArmModel::trained(LinearModel::from_weights(a, w), *s),
                    None => ArmModel { model: LinearModel::from_weights(a, w), threshold: Threshold::Untrainable },
                }
            })
            .collect();
        ArmSuitePolicy::new(kind, arms).unwrap()
    }

    #[test]
    fn argmax_of_normalized_scores() {
        let p = coordinate_suite(PolicyKind::Ranker, &[Some(0.0), Some(0.0)]);
        assert_eq!(p.predict(&[0.3, 0.7]).unwrap(), 1);
        let p = coordinate_suite(PolicyKind::Ranker, &[Some(0.0), Some(0.5)]);
        assert_eq!(p.predict(&[0.3, 0.7]).unwrap(), 0);
    }

    #[test]
    fn classifier_ignores_thresholds_but_uses_bias() {
        let mut p = coordinate_suite(PolicyKind::Classifier, &[Some(0.0), Some(100.0)]);
        assert_eq!(p.predict(&[0.3, 0.7]).unwrap(), 1);
        p.arms[0].model.bias = 1.0;
        assert_eq!(p.predict(&[0.3, 0.7]).unwrap(), 0);
    }

    #[test]
    fn ties_go_to_smallest_arm() {
        let p = coordinate_suite(PolicyKind::Ranker, &[Some(0.0); 3]);
        assert_eq!(p.predict(&[1.0, 1.0, 1.0]).unwrap(), 0);
    }

    #[test]
    fn excluded_arms_never_predicted() {
        let p = coordinate_suite(PolicyKind::Ranker, &[Some(0.0), None, Some(0.0)]);
        assert_eq!(p.predict(&[0.1, 9.9, 0.2]).unwrap(), 2);
        assert_eq!(p.excluded().iter().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(ArmSuitePolicy::new(PolicyKind::Ranker, vec![]), Err(PolicyError::Empty));
        let all_out = vec![ArmModel::untrainable(0, 2), ArmModel::untrainable(1, 2)];
        assert_eq!(ArmSuitePolicy::new(PolicyKind::Ranker, all_out), Err(PolicyError::NoActiveArms));
        let p = coordinate_suite(PolicyKind::Ranker, &[Some(0.0), Some(0.0)]);
        assert!(matches!(p.predict(&[1.0]), Err(PolicyError::DimensionMismatch { .. })));
    }

    #[test]
    fn epsilon_greedy_distribution() {
        let base = coordinate_suite(PolicyKind::Ranker, &[Some(0.0); 5]);
        let sp = StochasticPolicy::new(base.clone(), 0.2).unwrap();
        let dist = sp.action_distribution(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let expected = [0.05, 0.05, 0.8, 0.05, 0.05];
        for (p, e) in dist.iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        let greedy = StochasticPolicy::new(base, 0.0).unwrap();
        assert_eq!(greedy.action_distribution(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn full_exploration_with_two_arms() {
        let sp = StochasticPolicy::new(coordinate_suite(PolicyKind::Ranker, &[Some(0.0); 2]), 1.0).unwrap();
        assert_eq!(sp.action_distribution(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn exploration_reaches_excluded_arms() {
        let sp = StochasticPolicy::new(coordinate_suite(PolicyKind::Ranker, &[Some(0.0), None, Some(0.0)]), 0.2).unwrap();
        assert_eq!(sp.probability(&[1.0, 5.0, 0.0], 1).unwrap(), 0.1);
    }

    #[test]
    fn single_arm_cannot_explore() {
        let base = coordinate_suite(PolicyKind::Ranker, &[Some(0.0)]);
        assert_eq!(StochasticPolicy::new(base.clone(), 0.1), Err(PolicyError::NoArmsToExplore));
        assert!(StochasticPolicy::new(base, 0.0).is_ok());
        let two = coordinate_suite(PolicyKind::Ranker, &[Some(0.0); 2]);
        assert_eq!(StochasticPolicy::new(two, 1.5), Err(PolicyError::InvalidEpsilon(1.5)));
    }

    #[test]
    fn sampling_frequency_of_greedy_arm() {
        let sp = StochasticPolicy::new(coordinate_suite(PolicyKind::Ranker, &[Some(0.0); 5]), 0.2).unwrap();
        let x = [0.0, 0.0, 0.0, 1.0, 0.0];
        let mut rng = seed::rng(17);
        let n = 100_000;
        let hits = (0..n).filter(|_| sp.sample_action(&x, &mut rng).unwrap() == 3).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.8).abs() < 0.01, "{freq}");
    }

    #[test]
    fn sampling_is_reproducible_and_greedy_at_zero_epsilon() {
        let sp = StochasticPolicy::new(coordinate_suite(PolicyKind::Ranker, &[Some(0.0); 4]), 0.5).unwrap();
        let x = [0.2, 0.1, 0.9, 0.0];
        let draw = |seed| {
            let mut rng = seed::rng(seed);
            (0..50).map(|_| sp.sample_action(&x, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        let greedy = StochasticPolicy::new(sp.base().clone(), 0.0).unwrap();
        let mut rng = seed::rng(1);
        assert!((0..200).all(|_| greedy.sample_action(&x, &mut rng).unwrap() == 2));
    }

    #[test]
    fn threshold_serialization() {
        let json = serde_json::to_string(&[Threshold::Score(1.5), Threshold::Untrainable]).unwrap();
        assert_eq!(json, r#"[1.5,"untrainable"]"#);
        let back: Vec<Threshold> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Threshold::Score(1.5), Threshold::Untrainable]);
        assert!(serde_json::from_str::<Threshold>(r#""bogus""#).is_err());
    }

    fn random_suite() -> impl Strategy<Value = (ArmSuitePolicy, Vec<f64>)> {
        (2usize..6, 1usize..4).prop_flat_map(|(k, d)| {
            (
                prop::collection::vec((prop::collection::vec(-2.0f64..2.0, d), -1.0f64..1.0, prop::bool::weighted(0.8)), k),
                prop::collection::vec(-3.0f64..3.0, d),
            )
                .prop_map(|(arms, x)| {
                    let mut arms: Vec<ArmModel> = arms
                        .into_iter()
                        .enumerate()
                        .map(|(a, (w, s, ok))| {
                            let m = LinearModel::from_weights(a, w);
                            if ok { ArmModel::trained(m, s) } else { ArmModel { model: m, threshold: Threshold::Untrainable } }
                        })
                        .collect();
                    if arms.iter().all(ArmModel::is_excluded) {
                        arms[0].threshold = Threshold::Score(0.0);
                    }
                    (ArmSuitePolicy::new(PolicyKind::Ranker, arms).unwrap(), x)
                })
        })
    }

    proptest! {
        #[test]
        fn distribution_is_a_probability_vector((p, x) in random_suite(), eps in 0.0f64..=1.0) {
            let sp = StochasticPolicy::new(p, eps).unwrap();
            let dist = sp.action_distribution(&x).unwrap();
            prop_assert!(dist.iter().all(|&q| q >= 0.0));
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn common_shift_keeps_prediction(
            k in 2usize..6,
            ints in prop::collection::vec(-8i32..8, 18),
            c in -20i32..20,
        ) {
            // small integers keep every score and shift exact
            let x = [f64::from(ints[0]), f64::from(ints[1])];
            let build = |shift: f64| {
                let arms = (0..k)
                    .map(|a| {
                        let w = vec![f64::from(ints[2 + 3 * a]), f64::from(ints[3 + 3 * a])];
                        ArmModel::trained(LinearModel::from_weights(a, w), f64::from(ints[4 + 3 * a]) - shift)
                    })
                    .collect();
                ArmSuitePolicy::new(PolicyKind::Ranker, arms).unwrap()
            };
            prop_assert_eq!(build(0.0).predict(&x).unwrap(), build(f64::from(c)).predict(&x).unwrap());
        }

        #[test]
        fn raising_a_threshold_never_wins_the_arm((p, x) in random_suite(), arm in 0usize..6, bump in 0.001f64..5.0) {
            let arm = arm % p.num_arms();
            let before = p.predict(&x).unwrap();
            let mut arms = p.arms().to_vec();
            if let Threshold::Score(s) = arms[arm].threshold {
                arms[arm].threshold = Threshold::Score(s + bump);
            }
            let after = ArmSuitePolicy::new(PolicyKind::Ranker, arms).unwrap().predict(&x).unwrap();
            prop_assert!(!(after == arm && before != arm));
        }

        #[test]
        fn zero_epsilon_matches_base((p, x) in random_suite()) {
            let sp = StochasticPolicy::new(p.clone(), 0.0).unwrap();
            let greedy = p.predict(&x).unwrap();
            prop_assert_eq!(sp.probability(&x, greedy).unwrap(), 1.0);
            let mut rng = seed::rng(0);
            prop_assert_eq!(sp.sample_action(&x, &mut rng).unwrap(), greedy);
        }
    }
}
