//! Instance-weighted binary cross-entropy: the training objective is the
//! negated weighted conditional log likelihood
//! `L = -sum_i w_i [y_i ln p_i(1) + (1 - y_i) ln p_i(0)]`, minimized.

use crate::error::{CoreError, Result};
use crate::scalar::Real;

/// Probabilities are clamped to [1e-12, 1 - 1e-12] before the logarithm so a
/// confidently wrong prediction cannot produce an infinite loss.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_prob<F: Real>(p: F) -> F {
    p.max(F::of(PROB_CLAMP)).min(F::of(1.0 - PROB_CLAMP))
}

/// Weighted loss over a batch of class-probability pairs `[p(0), p(1)]`.
pub fn weighted_loss<F: Real>(probs: &[[F; 2]], labels: &[u8], weights: &[F]) -> Result<F> {
    if probs.len() != labels.len() || labels.len() != weights.len() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{} probs/labels/weights", probs.len()),
            found: format!("{} labels, {} weights", labels.len(), weights.len()),
        });
    }
    let mut loss = F::zero();
    for ((p, &y), &w) in probs.iter().zip(labels).zip(weights) {
        loss -= w * instance_log_likelihood(p, y);
    }
    Ok(loss)
}

/// Per-instance log likelihood `y ln p(1) + (1-y) ln p(0)`, clamped.
pub fn instance_log_likelihood<F: Real>(p: &[F; 2], y: u8) -> F {
    let p_fake = clamp_prob(p[1]);
    let p_real = clamp_prob(p[0]);
    if y == 1 {
        p_fake.ln()
    } else {
        p_real.ln()
    }
}

/// Gradient of the weighted loss at the softmax logits for one instance:
/// `w * (p - onehot(y))`.
pub fn logit_gradient<F: Real>(p: &[F; 2], y: u8, w: F) -> [F; 2] {
    let mut g = [w * p[0], w * p[1]];
    g[y as usize] -= w;
    g
}
