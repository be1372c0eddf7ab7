use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{LearnError, LinearModel, Result};
use crate::pipeline::BinaryTrainingSet;

/// Classification measure maximized when choosing a threshold score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    F1,
    Precision,
    Recall,
}

impl FromStr for Measure {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(Measure::F1),
            "precision" => Ok(Measure::Precision),
            "recall" => Ok(Measure::Recall),
            other => Err(LearnError::Config(format!("unknown measure {other:?}"))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::F1 => "f1",
            Measure::Precision => "precision",
            Measure::Recall => "recall",
        })
    }
}

/// Measure value from confusion counts. Precision with no predicted
/// positives is 0, and F1 is 0 when precision and recall are both 0.
pub fn measure_at(measure: Measure, true_pos: usize, false_pos: usize, positives: usize) -> f64 {
    let precision = if true_pos + false_pos == 0 { 0.0 } else { true_pos as f64 / (true_pos + false_pos) as f64 };
    let recall = if positives == 0 { 0.0 } else { true_pos as f64 / positives as f64 };
    match measure {
        Measure::Precision => precision,
        Measure::Recall => recall,
        Measure::F1 => {
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // adjacent floats: fall back to the upper score so `>=` still splits them
    if m <= a {
        b
    } else {
        m
    }
}

/// Threshold score `s_a` maximizing `measure` on the training set when
/// `score >= s_a` is read as "predict click".
///
/// Candidates are the midpoints between consecutive distinct scores plus one
/// point half a gap below the minimum and one half a gap above the maximum.
/// Ties go to the smallest (most permissive) candidate.
pub fn learn_threshold(model: &LinearModel, set: &BinaryTrainingSet, measure: Measure) -> Result<f64> {
    if set.positives.is_empty() || set.negatives.is_empty() {
        return Err(LearnError::Untrainable {
            arm: set.arm,
            positives: set.positives.len(),
            negatives: set.negatives.len(),
        });
    }
    let mut scored: Vec<(f64, bool)> = set
        .positives
        .iter()
        .map(|x| (model.score(x), true))
        .chain(set.negatives.iter().map(|x| (model.score(x), false)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    // distinct scores ascending, with per-value positive/negative counts
    let mut distinct: Vec<(f64, usize, usize)> = Vec::new();
    for (s, is_pos) in scored {
        match distinct.last_mut() {
            Some(last) if last.0 == s => {
                if is_pos {
                    last.1 += 1
                } else {
                    last.2 += 1
                }
            }
            _ => distinct.push((s, usize::from(is_pos), usize::from(!is_pos))),
        }
    }
    let m = distinct.len();
    let lo_gap = if m > 1 { distinct[1].0 - distinct[0].0 } else { 1.0 };
    let hi_gap = if m > 1 { distinct[m - 1].0 - distinct[m - 2].0 } else { 1.0 };

    // candidate i < m predicts positive for every score >= distinct[i];
    // candidate m predicts nothing
    let positives = set.positives.len();
    let (mut tp, mut fp) = (positives, set.negatives.len());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..=m {
        let value = measure_at(measure, tp, fp, positives);
        if value > best.0 {
            best = (value, i);
        }
        if i < m {
            tp -= distinct[i].1;
            fp -= distinct[i].2;
        }
    }
    let i = best.1;
    Ok(if i == 0 {
        distinct[0].0 - lo_gap / 2.0
    } else if i == m {
        distinct[m - 1].0 + hi_gap / 2.0
    } else {
        midpoint(distinct[i - 1].0, distinct[i].0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ContextVector;
    use proptest::prelude::*;

    fn scores_set(pos: &[f64], neg: &[f64]) -> BinaryTrainingSet {
        let c = |v: &f64| ContextVector::new(vec![*v]).unwrap();
        BinaryTrainingSet::new(0, pos.iter().map(c).collect(), neg.iter().map(c).collect())
    }

    fn identity() -> LinearModel {
        LinearModel::from_weights(0, vec![1.0])
    }

    /// Tries every distinct score as the threshold, plus "predict nothing".
    /// Returns the best measure and the smallest winning score (None for
    /// "predict nothing").
    fn brute_force(pos: &[f64], neg: &[f64], measure: Measure) -> (f64, Option<f64>) {
        let mut values: Vec<f64> = pos.iter().chain(neg).copied().collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut best = (f64::NEG_INFINITY, None);
        for &v in &values {
            let tp = pos.iter().filter(|&&s| s >= v).count();
            let fp = neg.iter().filter(|&&s| s >= v).count();
            let value = measure_at(measure, tp, fp, pos.len());
            if value > best.0 {
                best = (value, Some(v));
            }
        }
        let none = measure_at(measure, 0, 0, pos.len());
        if none > best.0 {
            best = (none, None);
        }
        best
    }

    #[test]
    fn separated_scores_f1() {
        let t = learn_threshold(&identity(), &scores_set(&[2.0, 3.0], &[0.0, 1.0]), Measure::F1).unwrap();
        assert_eq!(t, 1.5);
    }

    #[test]
    fn recall_takes_the_most_permissive_candidate() {
        let t = learn_threshold(&identity(), &scores_set(&[2.0, 3.0], &[0.0, 1.0]), Measure::Recall).unwrap();
        assert!(t < 0.0);
        assert_eq!(t, -0.5);
    }

    #[test]
    fn interleaved_scores_f1() {
        let set = scores_set(&[1.0, 3.0], &[2.0, 4.0]);
        let t = learn_threshold(&identity(), &set, Measure::F1).unwrap();
        assert_eq!(t, 0.5);
        let tp = [1.0, 3.0].iter().filter(|&&s| s >= t).count();
        let fp = [2.0, 4.0].iter().filter(|&&s| s >= t).count();
        assert!((measure_at(Measure::F1, tp, fp, 2) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn precision_conventions() {
        assert_eq!(measure_at(Measure::Precision, 0, 0, 3), 0.0);
        assert_eq!(measure_at(Measure::F1, 0, 4, 3), 0.0);
        let t = learn_threshold(&identity(), &scores_set(&[5.0, 1.0], &[2.0, 3.0]), Measure::Precision).unwrap();
        assert_eq!(t, 4.0);
    }

    #[test]
    fn single_distinct_score() {
        let t = learn_threshold(&identity(), &scores_set(&[1.0], &[1.0]), Measure::F1).unwrap();
        assert_eq!(t, 0.5);
    }

    #[test]
    fn requires_both_sides() {
        assert!(learn_threshold(&identity(), &scores_set(&[1.0], &[]), Measure::F1).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(
            pos in prop::collection::vec(-5i32..5, 1..12),
            neg in prop::collection::vec(-5i32..5, 1..12),
        ) {
            let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
            let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
            let set = scores_set(&pos, &neg);
            for measure in [Measure::F1, Measure::Precision, Measure::Recall] {
                let t = learn_threshold(&identity(), &set, measure).unwrap();
                let (best, at) = brute_force(&pos, &neg, measure);
                let tp = pos.iter().filter(|&&s| s >= t).count();
                let fp = neg.iter().filter(|&&s| s >= t).count();
                prop_assert_eq!(measure_at(measure, tp, fp, pos.len()), best);
                let smallest_at_or_above = pos.iter().chain(&neg).copied().filter(|&s| s >= t).fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))));
                prop_assert_eq!(smallest_at_or_above, at);
            }
        }
    }
}
