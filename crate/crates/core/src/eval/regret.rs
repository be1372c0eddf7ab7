use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Cumulative reward of a comparator against the algorithm over `rounds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub rounds: usize,
    pub optimal_cum: i64,
    pub algo_cum: i64,
    pub regret: i64,
}

/// Regret of the arms in `chosen` against full per-round reward vectors.
///
/// The comparator is `oracle`'s per-round choices when given, otherwise the
/// single fixed arm with the highest total reward in hindsight (lowest index
/// on ties).
pub fn regret_ledger(rewards: &[Vec<u8>], chosen: &[usize], oracle: Option<&[usize]>) -> Result<RegretLedger> {
    if rewards.len() != chosen.len() {
        return Err(EvalError::Shape(format!("{} reward rows but {} choices", rewards.len(), chosen.len())));
    }
    let k = rewards.first().map_or(0, Vec::len);
    if let Some(t) = rewards.iter().position(|r| r.len() != k) {
        return Err(EvalError::Shape(format!("row {t} has {} entries, expected {k}", rewards[t].len())));
    }
    let pick = |t: usize, a: usize| -> Result<i64> {
        rewards[t]
            .get(a)
            .map(|&r| i64::from(r))
            .ok_or_else(|| EvalError::Shape(format!("round {t} chooses arm {a} of {k}")))
    };
    let algo_cum = (0..chosen.len()).map(|t| pick(t, chosen[t])).sum::<Result<i64>>()?;
    let optimal_cum = match oracle {
        Some(o) => {
            if o.len() != rewards.len() {
                return Err(EvalError::Shape(format!("{} oracle choices for {} rounds", o.len(), rewards.len())));
            }
            (0..o.len()).map(|t| pick(t, o[t])).sum::<Result<i64>>()?
        }
        None => (0..k)
            .map(|a| rewards.iter().map(|r| i64::from(r[a])).sum::<i64>())
            .max()
            .unwrap_or(0),
    };
    Ok(RegretLedger { rounds: rewards.len(), optimal_cum, algo_cum, regret: optimal_cum - algo_cum })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_always_rewarded() {
        let rewards = vec![vec![1, 0]; 10];
        let chosen: Vec<usize> = (0..10).map(|t| usize::from(t >= 7)).collect();
        let l = regret_ledger(&rewards, &chosen, Some(&[0; 10])).unwrap();
        assert_eq!((l.optimal_cum, l.algo_cum, l.regret), (10, 7, 3));
    }

    #[test]
    fn matching_the_comparator_gives_zero() {
        let rewards = vec![vec![0, 1, 0], vec![1, 1, 0], vec![0, 0, 1]];
        let oracle = [1, 0, 2];
        assert_eq!(regret_ledger(&rewards, &oracle, Some(&oracle)).unwrap().regret, 0);
    }

    #[test]
    fn best_fixed_arm_in_hindsight() {
        let rewards = vec![vec![1, 0], vec![1, 0], vec![0, 1]];
        let l = regret_ledger(&rewards, &[0, 0, 0], None).unwrap();
        assert_eq!((l.optimal_cum, l.algo_cum, l.regret), (2, 2, 0));
        let l = regret_ledger(&rewards, &[1, 1, 1], None).unwrap();
        assert_eq!(l.regret, 1);
    }

    #[test]
    fn shape_errors() {
        assert!(regret_ledger(&[vec![1, 0]], &[0, 1], None).is_err());
        assert!(regret_ledger(&[vec![1, 0], vec![1]], &[0, 0], None).is_err());
        assert!(regret_ledger(&[vec![1, 0]], &[2], None).is_err());
        assert!(regret_ledger(&[vec![1, 0]], &[0], Some(&[0, 0])).is_err());
    }
}
