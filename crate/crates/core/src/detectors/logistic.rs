//! L2-regularized logistic regression trained by full-batch gradient descent
//! with backtracking line search.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Trained binary classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_spec: Vec<String>,
    pub training_meta: TrainingMeta,
}

/// Provenance of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: usize,
    pub final_loss: f64,
    pub converged: bool,
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub seed: u64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub l2: f64,
    pub feature_spec: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            max_iters: 500,
            tolerance: 1e-6,
            l2: 1e-4,
            feature_spec: Vec::new(),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Regularized mean logistic loss and its gradient, exposed for diagnostics
/// such as finite-difference checks.
///
/// Labels are `true` = positive class. The bias is not regularized.
pub fn loss_and_grad(
    data: &[(Vec<f64>, bool)],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = data.len() as f64;
    let dim = weights.len();
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; dim];
    let mut grad_b = 0.0;
    for (x, y) in data {
        let z: f64 = x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + bias;
        let y_signed = if *y { 1.0 } else { -1.0 };
        loss += log1p_exp(-y_signed * z);
        let p = sigmoid(z);
        let delta = p - if *y { 1.0 } else { 0.0 };
        for (g, a) in grad_w.iter_mut().zip(x) {
            *g += delta * a;
        }
        grad_b += delta;
    }
    loss /= n;
    grad_b /= n;
    for g in grad_w.iter_mut() {
        *g /= n;
    }
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g += l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Train on `(feature vector, is_positive)` pairs.
///
/// Deterministic given the config; convergence is declared when the gradient
/// infinity-norm drops below `tolerance`, and the loss never increases across
/// iterations (backtracking guarantees descent).
pub fn train_classifier(
    data: &[(Vec<f64>, bool)],
    cfg: &TrainConfig,
) -> Result<LogisticClassifier> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(
            "classifier training needs at least 2 samples".into(),
        ));
    }
    let dim = data[0].0.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("feature vectors are empty".into()));
    }
    let pos = data.iter().filter(|(_, y)| *y).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::InvalidArgument(
            "classifier training needs both classes present".into(),
        ));
    }
    for (x, _) in data {
        if x.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "inconsistent feature dimension: {} vs {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
    }

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let (mut loss, mut grad_w, mut grad_b) = loss_and_grad(data, &weights, bias, cfg.l2);
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let grad_norm = grad_w
            .iter()
            .chain(std::iter::once(&grad_b))
            .fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < cfg.tolerance {
            converged = true;
            break;
        }
        let grad_sq: f64 =
            grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
        // backtracking line search (Armijo)
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let trial_w: Vec<f64> = weights
                .iter()
                .zip(&grad_w)
                .map(|(w, g)| w - step * g)
                .collect();
            let trial_b = bias - step * grad_b;
            let (trial_loss, tg_w, tg_b) = loss_and_grad(data, &trial_w, trial_b, cfg.l2);
            if trial_loss <= loss - 1e-4 * step * grad_sq {
                weights = trial_w;
                bias = trial_b;
                loss = trial_loss;
                grad_w = tg_w;
                grad_b = tg_b;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            converged = true; // no descent direction at numeric precision
            break;
        }
    }

    let feature_spec = if cfg.feature_spec.len() == dim {
        cfg.feature_spec.clone()
    } else {
        (0..dim).map(|i| format!("f{i}")).collect()
    };
    Ok(LogisticClassifier {
        weights,
        bias,
        feature_spec,
        training_meta: TrainingMeta {
            seed: cfg.seed,
            iterations,
            final_loss: loss,
            converged,
        },
    })
}

/// Positive-class probability.
pub fn classify(clf: &LogisticClassifier, features: &[f64]) -> Result<f64> {
    if features.len() != clf.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "feature dimension {} does not match classifier dimension {}",
            features.len(),
            clf.weights.len()
        )));
    }
    let z: f64 = features
        .iter()
        .zip(&clf.weights)
        .map(|(a, w)| a * w)
        .sum::<f64>()
        + clf.bias;
    Ok(sigmoid(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meta_clf(weights: Vec<f64>, bias: f64) -> LogisticClassifier {
        LogisticClassifier {
            feature_spec: (0..weights.len()).map(|i| format!("f{i}")).collect(),
            weights,
            bias,
            training_meta: TrainingMeta {
                seed: 0,
                iterations: 0,
                final_loss: 0.0,
                converged: true,
            },
        }
    }

    #[test]
    fn classify_zero_weights_is_half() {
        let clf = meta_clf(vec![0.0, 0.0], 0.0);
        assert_eq!(classify(&clf, &[3.0, -1.0]).unwrap(), 0.5);
    }

    #[test]
    fn classify_bias_only_is_sigmoid_of_bias() {
        let clf = meta_clf(vec![0.0], 1.5);
        let expected = 1.0 / (1.0 + (-1.5f64).exp());
        assert!((classify(&clf, &[0.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn classify_matches_hand_sigmoid() {
        let clf = meta_clf(vec![2.0, -1.0], 0.5);
        let z: f64 = 2.0 * 1.0 - 1.0 * 3.0 + 0.5;
        let expected = 1.0 / (1.0 + (-z).exp());
        assert!((classify(&clf, &[1.0, 3.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn separable_1d_reaches_full_accuracy() {
        let data: Vec<(Vec<f64>, bool)> = (0..20)
            .map(|i| {
                let x = i as f64 / 10.0;
                (vec![x], x > 1.0)
            })
            .collect();
        let clf = train_classifier(&data, &TrainConfig::default()).unwrap();
        let correct = data
            .iter()
            .filter(|(x, y)| (classify(&clf, x).unwrap() > 0.5) == *y)
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn single_class_errors() {
        let data = vec![(vec![1.0], true), (vec![2.0], true)];
        assert!(train_classifier(&data, &TrainConfig::default()).is_err());
    }

    #[test]
    fn non_finite_features_error() {
        let data = vec![(vec![f64::NAN], true), (vec![1.0], false)];
        assert!(train_classifier(&data, &TrainConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..20 {
            let data: Vec<(Vec<f64>, bool)> = (0..12)
                .map(|_| {
                    (
                        (0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect::<Vec<f64>>(),
                        rng.gen::<bool>(),
                    )
                })
                .collect();
            let w: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() - 0.5).collect();
            let b = rng.gen::<f64>() - 0.5;
            let (_, grad_w, grad_b) = loss_and_grad(&data, &w, b, 1e-4);
            for k in 0..5 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let (lp, _, _) = loss_and_grad(&data, &wp, b, 1e-4);
                let (lm, _, _) = loss_and_grad(&data, &wm, b, 1e-4);
                let fd = (lp - lm) / (2.0 * h);
                let denom = grad_w[k].abs().max(1e-8);
                assert!(
                    ((grad_w[k] - fd) / denom).abs() < 1e-4,
                    "weight {k}: analytic {} vs fd {fd}",
                    grad_w[k]
                );
            }
            let (lp, _, _) = loss_and_grad(&data, &w, b + h, 1e-4);
            let (lm, _, _) = loss_and_grad(&data, &w, b - h, 1e-4);
            let fd = (lp - lm) / (2.0 * h);
            assert!(((grad_b - fd) / grad_b.abs().max(1e-8)).abs() < 1e-4);
        }
    }

    #[test]
    fn training_order_permutation_matches_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data: Vec<(Vec<f64>, bool)> = (0..30)
            .map(|i| {
                (
                    vec![rng.gen::<f64>() + if i % 2 == 0 { 0.5 } else { 0.0 }],
                    i % 2 == 0,
                )
            })
            .collect();
        let a = train_classifier(&data, &TrainConfig::default()).unwrap();
        data.reverse();
        let b = train_classifier(&data, &TrainConfig::default()).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-9);
        }
        assert!((a.bias - b.bias).abs() < 1e-9);
    }

    #[test]
    fn loss_is_non_increasing_over_iterations() {
        // re-run training capturing intermediate losses through the public API:
        // train with increasing max_iters and confirm the final loss never rises
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<(Vec<f64>, bool)> = (0..40)
            .map(|i| {
                (
                    vec![rng.gen::<f64>() * 2.0 - if i % 2 == 0 { 0.0 } else { 0.7 }],
                    i % 2 == 0,
                )
            })
            .collect();
        let mut prev = f64::INFINITY;
        for iters in [1usize, 2, 4, 8, 16, 32, 64] {
            let cfg = TrainConfig {
                max_iters: iters,
                ..TrainConfig::default()
            };
            let clf = train_classifier(&data, &cfg).unwrap();
            assert!(clf.training_meta.final_loss <= prev + 1e-12);
            prev = clf.training_meta.final_loss;
        }
    }
}
