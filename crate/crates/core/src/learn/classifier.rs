use rand::Rng;

use super::{dot, LearnError, LinearModel, Result, Surrogate, TrainConfig};
use crate::pipeline::BinaryTrainingSet;
use crate::seed;

fn labelled(set: &BinaryTrainingSet) -> impl Iterator<Item = (&[f64], f64)> {
    set.positives
        .iter()
        .map(|x| (x.as_slice(), 1.0))
        .chain(set.negatives.iter().map(|x| (x.as_slice(), -1.0)))
}

/// Mean pointwise logistic loss `log(1 + exp(−y(w·x + b)))` plus
/// `(λ/2)(‖w‖² + b²)`; the bias is an ordinary augmented coordinate.
pub fn classifier_objective(model: &LinearModel, set: &BinaryTrainingSet, lambda: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(LearnError::Untrainable { arm: set.arm, positives: 0, negatives: 0 });
    }
    let loss: f64 = labelled(set).map(|(x, y)| Surrogate::Logistic.value(y * model.score(x))).sum();
    let norm = dot(&model.weights, &model.weights) + model.bias * model.bias;
    Ok(loss / set.len() as f64 + 0.5 * lambda * norm)
}

/// Gradient of [`classifier_objective`]; the bias derivative is the last entry.
pub fn classifier_objective_gradient(model: &LinearModel, set: &BinaryTrainingSet, lambda: f64) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(LearnError::Untrainable { arm: set.arm, positives: 0, negatives: 0 });
    }
    let d = model.dimension();
    let mut grad = vec![0.0; d + 1];
    for (x, y) in labelled(set) {
        let g = Surrogate::Logistic.grad(y * model.score(x)) * y;
        for k in 0..d {
            grad[k] += g * x[k];
        }
        grad[d] += g;
    }
    let n = set.len() as f64;
    for (gk, wk) in grad.iter_mut().zip(model.weights.iter().chain(std::iter::once(&model.bias))) {
        *gk = *gk / n + lambda * wk;
    }
    Ok(grad)
}

/// One-vs-rest logistic classifier for an arm, fitted by SGD that samples a
/// single example uniformly from the union of both sides per step and uses
/// the ranker's step schedule.
pub fn train_logistic_classifier(set: &BinaryTrainingSet, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(LearnError::Untrainable { arm: set.arm, positives: 0, negatives: 0 });
    }
    let d = set.dimension().unwrap_or(0);
    let np = set.positives.len();
    let n = set.len();
    let mut rng = seed::rng(cfg.seed);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for k in 1..=cfg.iterations {
        let i = rng.random_range(0..n);
        let (x, y) = if i < np { (&set.positives[i], 1.0) } else { (&set.negatives[i - np], -1.0) };
        let g = Surrogate::Logistic.grad(y * (dot(&w, x) + b)) * y;
        let eta = cfg.step_size(k);
        for (wk, xk) in w.iter_mut().zip(x.iter()) {
            *wk -= eta * (g * xk + cfg.lambda * *wk);
        }
        b -= eta * (g + cfg.lambda * b);
    }
    Ok(LinearModel { arm: set.arm, weights: w, bias: b, trained: true })
}
