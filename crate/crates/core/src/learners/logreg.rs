//! Instance-weighted logistic regression trained by full-batch gradient
//! descent on the weighted cross-entropy, with L2 weight decay scaled by the
//! total instance weight so zero-weight data leaves the model untouched.

use crate::error::{CoreError, Result};
use crate::learners::activations::sigmoid;
use crate::learners::train::TrainConfig;
use crate::learners::Prediction;
use crate::scalar::Real;

pub const GRAD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel<F> {
    pub weights: Vec<F>,
    pub bias: F,
}

impl<F: Real> LogRegModel<F> {
    pub fn zeros(dim: usize) -> Self {
        LogRegModel {
            weights: vec![F::zero(); dim],
            bias: F::zero(),
        }
    }

    pub fn prob_fake(&self, x: &[F]) -> Result<F> {
        if x.len() != self.weights.len() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} features", self.weights.len()),
                found: format!("{}", x.len()),
            });
        }
        let z = self
            .weights
            .iter()
            .zip(x)
            .fold(self.bias, |acc, (w, xi)| acc + *w * *xi);
        Ok(sigmoid(z))
    }

    pub fn predict(&self, x: &[F]) -> Result<Prediction<F>> {
        Ok(Prediction::from_prob_fake(self.prob_fake(x)?))
    }
}

/// Train from a zero initialization.
pub fn train_weighted_logreg<F: Real>(
    x: &[Vec<F>],
    y: &[u8],
    w: &[F],
    cfg: &TrainConfig,
) -> Result<LogRegModel<F>> {
    let dim = x.first().map_or(0, |row| row.len());
    train_weighted_logreg_from(LogRegModel::zeros(dim), x, y, w, cfg)
}

/// Continue training from an existing model (warm start, used by the linear
/// model-transfer analog).
pub fn train_weighted_logreg_from<F: Real>(
    init: LogRegModel<F>,
    x: &[Vec<F>],
    y: &[u8],
    w: &[F],
    cfg: &TrainConfig,
) -> Result<LogRegModel<F>> {
    if x.len() != y.len() || y.len() != w.len() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{} rows/labels/weights", x.len()),
            found: format!("{} labels, {} weights", y.len(), w.len()),
        });
    }
    let dim = init.weights.len();
    if x.iter().any(|row| row.len() != dim) {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{dim} features per row"),
            found: "ragged feature matrix".into(),
        });
    }
    if w.iter().any(|wi| *wi < F::zero() || !wi.is_finite()) {
        return Err(CoreError::InvalidInput("negative or non-finite instance weight".into()));
    }

    let mut model = init;
    let mass: F = w.iter().copied().sum();
    let decay = F::of(cfg.weight_decay) * mass;
    let tol2 = GRAD_TOLERANCE * GRAD_TOLERANCE;
    'outer: for stage in &cfg.schedule {
        let rate = F::of(stage.rate);
        for _ in 0..stage.epochs {
            let mut grad_w = vec![F::zero(); dim];
            let mut grad_b = F::zero();
            for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
                let p = model.prob_fake(row)?;
                let err = wi * (p - F::of(yi as f64));
                grad_b += err;
                for (g, xi) in grad_w.iter_mut().zip(row) {
                    *g += err * *xi;
                }
            }
            for (g, wt) in grad_w.iter_mut().zip(&model.weights) {
                *g += decay * *wt;
            }
            let norm2 = grad_w.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>()
                + grad_b.as_f64() * grad_b.as_f64();
            if norm2 < tol2 {
                break 'outer;
            }
            for (wt, g) in model.weights.iter_mut().zip(&grad_w) {
                *wt -= rate * *g;
            }
            model.bias -= rate * grad_b;
        }
    }
    if !model.weights.iter().all(|v| v.is_finite()) || !model.bias.is_finite() {
        return Err(CoreError::TrainDiverged { epoch: 0, batch: 0 });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::train::LrStage;
    use crate::rng::Rng;

    fn cfg(rate: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            schedule: vec![LrStage { rate, epochs }],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_weights_leave_zero_init() {
        let x = vec![vec![1.0f64, -2.0], vec![0.5, 3.0]];
        let model = train_weighted_logreg(&x, &[0, 1], &[0.0, 0.0], &cfg(0.1, 50)).unwrap();
        assert_eq!(model.weights, vec![0.0, 0.0]);
        assert_eq!(model.bias, 0.0);
    }

    #[test]
    fn separable_1d_sign() {
        let x: Vec<Vec<f64>> = (-5..=5).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (-5..=5).map(|i| if i > 0 { 1 } else { 0 }).collect();
        let w = vec![1.0; x.len()];
        let model = train_weighted_logreg(&x, &y, &w, &cfg(0.1, 200)).unwrap();
        assert!(model.weights[0] > 0.0);
    }

    // Independent Newton solver as oracle: with the exact Hessian the convex
    // objective converges in a handful of steps.
    fn newton_oracle(x: &[Vec<f64>], y: &[u8], w: &[f64], lambda: f64) -> (Vec<f64>, f64) {
        let dim = x[0].len();
        let mass: f64 = w.iter().sum();
        let mut theta = vec![0.0f64; dim + 1]; // weights then bias
        for _ in 0..60 {
            let mut grad = vec![0.0f64; dim + 1];
            let mut hess = vec![vec![0.0f64; dim + 1]; dim + 1];
            for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
                let z = row.iter().zip(&theta[..dim]).map(|(a, b)| a * b).sum::<f64>()
                    + theta[dim];
                let p = 1.0 / (1.0 + (-z).exp());
                let err = wi * (p - yi as f64);
                let s = wi * p * (1.0 - p);
                let ext: Vec<f64> = row.iter().copied().chain([1.0]).collect();
                for i in 0..=dim {
                    grad[i] += err * ext[i];
                    for j in 0..=dim {
                        hess[i][j] += s * ext[i] * ext[j];
                    }
                }
            }
            for i in 0..dim {
                grad[i] += lambda * mass * theta[i];
                hess[i][i] += lambda * mass;
            }
            hess[dim][dim] += 1e-12; // keep the solve well posed
            let step = solve(&mut hess.clone(), &grad);
            for i in 0..=dim {
                theta[i] -= step[i];
            }
            if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-12 {
                break;
            }
        }
        (theta[..dim].to_vec(), theta[dim])
    }

    fn solve(a: &mut [Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut aug: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(row, &bi)| row.iter().copied().chain([bi]).collect())
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, pivot);
            let p = aug[col][col];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug[r][col] / p;
                for c in col..=n {
                    aug[r][c] -= f * aug[col][c];
                }
            }
        }
        (0..n).map(|i| aug[i][n] / aug[i][i]).collect()
    }

    #[test]
    fn converges_to_newton_optimum_with_small_gradient() {
        let mut rng = Rng::new(44);
        let n = 40;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut w = Vec::new();
        for _ in 0..n {
            let label = rng.next_index(2) as u8;
            let shift = if label == 1 { 0.8 } else { -0.8 };
            x.push(vec![shift + rng.next_gaussian(), rng.next_gaussian()]);
            y.push(label);
            w.push(0.5 + rng.next_f64());
        }
        let mut c = cfg(0.05, 60_000);
        c.weight_decay = 0.01;
        let model = train_weighted_logreg(&x, &y, &w, &c).unwrap();

        // Gradient at our optimum.
        let mass: f64 = w.iter().sum();
        let mut grad = [0.0f64; 3];
        for ((row, &yi), &wi) in x.iter().zip(&y).zip(&w) {
            let p = model.prob_fake(row).unwrap();
            let err = wi * (p - yi as f64);
            grad[0] += err * row[0];
            grad[1] += err * row[1];
            grad[2] += err;
        }
        grad[0] += 0.01 * mass * model.weights[0];
        grad[1] += 0.01 * mass * model.weights[1];
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm at optimum: {norm}");

        let (ow, ob) = newton_oracle(&x, &y, &w, 0.01);
        assert!((model.weights[0] - ow[0]).abs() < 1e-5);
        assert!((model.weights[1] - ow[1]).abs() < 1e-5);
        assert!((model.bias - ob).abs() < 1e-5);
    }

    #[test]
    fn prob_dimension_checked() {
        let model = LogRegModel::<f64>::zeros(3);
        assert!(model.prob_fake(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn predict_threshold_tie_goes_fake() {
        let model = LogRegModel::<f64>::zeros(1);
        let p = model.predict(&[123.0]).unwrap();
        assert_eq!(p.prob_fake, 0.5);
        assert_eq!(p.label, 1);
    }
}
