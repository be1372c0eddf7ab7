use rand::Rng;

use super::{dot, LearnError, LinearModel, Result, Surrogate, TrainConfig};
use crate::pipeline::BinaryTrainingSet;
use crate::seed;

fn require_both_sides(set: &BinaryTrainingSet) -> Result<()> {
    if set.positives.is_empty() || set.negatives.is_empty() {
        return Err(LearnError::Untrainable {
            arm: set.arm,
            positives: set.positives.len(),
            negatives: set.negatives.len(),
        });
    }
    Ok(())
}

fn check_dimension(model: &LinearModel, set: &BinaryTrainingSet) -> Result<()> {
    match set.dimension() {
        Some(d) if d != model.dimension() => {
            Err(LearnError::DimensionMismatch { expected: model.dimension(), found: d })
        }
        _ => Ok(()),
    }
}

/// Fraction of (positive, negative) pairs the model orders wrongly, i.e.
/// with `w·x⁺ − w·x⁻ < 0`. Exact ties count as correctly ordered.
pub fn empirical_aucl(model: &LinearModel, set: &BinaryTrainingSet) -> Result<f64> {
    require_both_sides(set)?;
    check_dimension(model, set)?;
    let mut pos: Vec<f64> = set.positives.iter().map(|x| dot(&model.weights, x)).collect();
    let neg: Vec<f64> = set.negatives.iter().map(|x| dot(&model.weights, x)).collect();
    pos.sort_by(f64::total_cmp);
    // for each negative, count positives scoring strictly below it
    let violated: usize = neg.iter().map(|&s| pos.partition_point(|&p| p - s < 0.0)).sum();
    Ok(violated as f64 / (pos.len() as f64 * neg.len() as f64))
}

/// Full pairwise surrogate objective
/// `(1/(|S+||S−|)) Σ Σ ℓ(w·x⁺ − w·x⁻) + (λ/2)‖w‖²`.
pub fn surrogate_objective(
    model: &LinearModel,
    set: &BinaryTrainingSet,
    surrogate: Surrogate,
    lambda: f64,
) -> Result<f64> {
    require_both_sides(set)?;
    check_dimension(model, set)?;
    let w = &model.weights;
    let neg: Vec<f64> = set.negatives.iter().map(|x| dot(w, x)).collect();
    let mut total = 0.0;
    for xp in &set.positives {
        let sp = dot(w, xp);
        total += neg.iter().map(|sn| surrogate.value(sp - sn)).sum::<f64>();
    }
    let pairs = (set.positives.len() * set.negatives.len()) as f64;
    Ok(total / pairs + 0.5 * lambda * dot(w, w))
}

/// Exact gradient of [`surrogate_objective`] with respect to the weights.
pub fn objective_gradient(
    model: &LinearModel,
    set: &BinaryTrainingSet,
    surrogate: Surrogate,
    lambda: f64,
) -> Result<Vec<f64>> {
    require_both_sides(set)?;
    check_dimension(model, set)?;
    let w = &model.weights;
    let d = w.len();
    let mut grad = vec![0.0; d];
    let neg: Vec<f64> = set.negatives.iter().map(|x| dot(w, x)).collect();
    for xp in &set.positives {
        let sp = dot(w, xp);
        for (xn, sn) in set.negatives.iter().zip(&neg) {
            let g = surrogate.grad(sp - sn);
            if g != 0.0 {
                for k in 0..d {
                    grad[k] += g * (xp[k] - xn[k]);
                }
            }
        }
    }
    let pairs = (set.positives.len() * set.negatives.len()) as f64;
    for (gk, wk) in grad.iter_mut().zip(w) {
        *gk = *gk / pairs + lambda * wk;
    }
    Ok(grad)
}

/// Stochastic gradient for one sampled pair: `ℓ′(t)(x⁺ − x⁻) + λw` with
/// `t = w·(x⁺ − x⁻)`.
pub fn pair_gradient(weights: &[f64], positive: &[f64], negative: &[f64], surrogate: Surrogate, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    pair_gradient_into(weights, positive, negative, surrogate, lambda, &mut out);
    out
}

fn pair_gradient_into(
    weights: &[f64],
    positive: &[f64],
    negative: &[f64],
    surrogate: Surrogate,
    lambda: f64,
    out: &mut [f64],
) {
    let t: f64 = weights.iter().zip(positive).zip(negative).map(|((w, p), n)| w * (p - n)).sum();
    let g = surrogate.grad(t);
    for k in 0..weights.len() {
        out[k] = g * (positive[k] - negative[k]) + lambda * weights[k];
    }
}

/// Minimizes the pairwise surrogate objective by SGD from `w = 0`.
///
/// Each step samples one positive and one negative uniformly and
/// independently and moves against their pair gradient with step
/// `η₀/√k`. The final iterate is returned.
pub fn train_ranker(set: &BinaryTrainingSet, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    require_both_sides(set)?;
    let d = set.dimension().unwrap_or(0);
    let mut rng = seed::rng(cfg.seed);
    let mut w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let (np, nn) = (set.positives.len(), set.negatives.len());
    for k in 1..=cfg.iterations {
        let xp = &set.positives[rng.random_range(0..np)];
        let xn = &set.negatives[rng.random_range(0..nn)];
        pair_gradient_into(&w, xp, xn, cfg.surrogate, cfg.lambda, &mut grad);
        let eta = cfg.step_size(k);
        for (wk, gk) in w.iter_mut().zip(&grad) {
            *wk -= eta * gk;
        }
    }
    Ok(LinearModel { arm: set.arm, weights: w, bias: 0.0, trained: true })
}
