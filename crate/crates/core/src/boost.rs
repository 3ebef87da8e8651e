//! Iterative instance-weighted transfer boosting.
//!
//! The driver trains a base learner on auxiliary + target instances under a
//! normalized weight distribution, measures the weighted error on the target
//! training portion, and updates raw weights: misclassified auxiliary
//! instances are scaled down by a run constant `beta`, misclassified target
//! instances scaled up by `1 / beta_t`. Instance layout is fixed with the n
//! auxiliary instances first, then the m target instances, which keeps the
//! update rules branch-free. The final predictor is a weighted threshold vote
//! over the recorded members.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Every instance starts at 1 / (n + m).
    Average,
    /// Auxiliary instances start at the fine-tuned model's predicted
    /// probability of their weak label; target instances at 1. Normalized.
    FinetuneBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonPolicy {
    /// Stop boosting, keeping the members recorded so far.
    HaltKeepPrevious,
    /// Clamp the error to 0.499 and continue.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteRange {
    AllIterations,
    LastHalf,
}

pub const EPSILON_CLAMP: f64 = 0.499;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub iterations: usize,
    pub init_strategy: InitStrategy,
    pub epsilon_floor: f64,
    pub epsilon_policy_on_half: EpsilonPolicy,
    pub vote_range: VoteRange,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            iterations: 5,
            init_strategy: InitStrategy::Average,
            epsilon_floor: 1e-6,
            epsilon_policy_on_half: EpsilonPolicy::HaltKeepPrevious,
            vote_range: VoteRange::AllIterations,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(CoreError::InvalidInput("iterations must be >= 1".into()));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor < 0.5) {
            return Err(CoreError::InvalidInput(format!(
                "epsilon_floor {} outside (0, 0.5)",
                self.epsilon_floor
            )));
        }
        Ok(())
    }
}

/// Initial weight vector over the n auxiliary + m target instances.
/// `aux_probs[i]` is the predicted probability of auxiliary instance i's weak
/// label under the fine-tuned model; required for the finetune strategy.
pub fn init_weights<F: Real>(
    n: usize,
    m: usize,
    strategy: InitStrategy,
    aux_probs: Option<&[F]>,
) -> Result<Vec<F>> {
    let total = n + m;
    if total == 0 {
        return Err(CoreError::InvalidInput("empty dataset".into()));
    }
    match strategy {
        InitStrategy::Average => Ok(vec![F::one() / F::from_count(total); total]),
        InitStrategy::FinetuneBased => {
            let probs = aux_probs.ok_or(CoreError::MissingAuxProbs)?;
            if probs.len() != n {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("{n} auxiliary probabilities"),
                    found: format!("{}", probs.len()),
                });
            }
            let mut w: Vec<F> = probs.to_vec();
            w.extend(std::iter::repeat_n(F::one(), m));
            normalize(&w)
        }
    }
}

/// w / sum(w); errors when the mass is zero.
pub fn normalize<F: Real>(w: &[F]) -> Result<Vec<F>> {
    let total: F = w.iter().copied().sum();
    if !(total > F::zero()) {
        return Err(CoreError::ZeroWeightMass);
    }
    Ok(w.iter().map(|&x| x / total).collect())
}

/// Weighted prediction error over the target training portion only:
/// `sum(w_i |P(x_i) - L(x_i)|) / sum(w_i)`.
pub fn target_error<F: Real>(predictions: &[u8], labels: &[u8], weights: &[F]) -> Result<F> {
    if predictions.len() != labels.len() || labels.len() != weights.len() {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{} predictions/labels/weights", predictions.len()),
            found: format!("{} labels, {} weights", labels.len(), weights.len()),
        });
    }
    let mass: F = weights.iter().copied().sum();
    if !(mass > F::zero()) {
        return Err(CoreError::ZeroTargetMass);
    }
    let wrong: F = predictions
        .iter()
        .zip(labels)
        .zip(weights)
        .filter(|((p, l), _)| p != l)
        .map(|(_, &w)| w)
        .sum();
    Ok(wrong / mass)
}

/// Outcome of the per-iteration error policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaDecision<F> {
    Proceed { beta_t: F, beta: F, epsilon_used: F },
    /// Error reached 0.5 under the halt policy: stop, keep prior members.
    Halt,
}

/// Apply the epsilon policy, then compute
/// `beta_t = eps / (1 - eps)` and `beta = 1 / (1 + sqrt(2 ln n / K))`.
pub fn compute_betas<F: Real>(
    epsilon_t: F,
    n: usize,
    iterations: usize,
    cfg: &BoostConfig,
) -> Result<BetaDecision<F>> {
    if n < 2 {
        return Err(CoreError::InvalidInput(
            "auxiliary set must hold at least 2 instances".into(),
        ));
    }
    let mut eps = epsilon_t;
    let floor = F::of(cfg.epsilon_floor);
    if eps < floor {
        eps = floor;
    }
    if eps >= F::of(0.5) {
        match cfg.epsilon_policy_on_half {
            EpsilonPolicy::HaltKeepPrevious => return Ok(BetaDecision::Halt),
            EpsilonPolicy::Clamp => eps = F::of(EPSILON_CLAMP),
        }
    }
    let beta_t = eps / (F::one() - eps);
    let beta = F::of(1.0 / (1.0 + (2.0 * (n as f64).ln() / iterations as f64).sqrt()));
    Ok(BetaDecision::Proceed { beta_t, beta, epsilon_used: eps })
}

/// One weight-update step. Auxiliary instances (indices < n) shrink by
/// `beta^|P-L|`; target instances grow by `beta_t^-|P-L|`. Correctly
/// classified instances are untouched.
pub fn update_weights<F: Real>(
    w: &[F],
    predictions: &[u8],
    labels: &[u8],
    beta: F,
    beta_t: F,
    n: usize,
) -> Vec<F> {
    debug_assert_eq!(w.len(), predictions.len());
    debug_assert_eq!(w.len(), labels.len());
    w.iter()
        .enumerate()
        .map(|(i, &wi)| {
            if predictions[i] == labels[i] {
                wi
            } else if i < n {
                wi * beta
            } else {
                wi / beta_t
            }
        })
        .collect()
}

/// A base learner trainable under an instance-weight distribution. The
/// learner owns its data (features or images) in the fixed auxiliary-first
/// layout; the driver only sees weights and predictions.
pub trait WeightedLearner<F: Real> {
    type Model;

    /// Train on all n + m instances under the normalized distribution.
    fn train(&mut self, weights: &[F], round: usize) -> Result<Self::Model>;

    /// Predictions of a model on every training instance, in layout order.
    fn predict_all(&self, model: &Self::Model) -> Result<Vec<u8>>;
}

/// The trained ensemble: members with their `beta_t`, voting per the
/// threshold rule over the configured range.
#[derive(Debug, Clone)]
pub struct BoostEnsemble<M, F> {
    pub members: Vec<(M, F)>,
    pub vote_range: VoteRange,
}

impl<M, F: Real> BoostEnsemble<M, F> {
    /// Indices of the members participating in the vote (1-based positions
    /// ceil(N/2)..=N under `LastHalf`).
    pub fn voting_indices(&self) -> std::ops::Range<usize> {
        let n = self.members.len();
        match self.vote_range {
            VoteRange::AllIterations => 0..n,
            VoteRange::LastHalf => n.div_ceil(2) - 1..n,
        }
    }

    /// The threshold vote: 1 iff
    /// `sum_t log(1/beta_t) v_t >= 1/2 sum_t log(1/beta_t)`, ties to 1.
    pub fn vote(&self, member_votes: &[u8]) -> Result<u8> {
        if self.members.is_empty() {
            return Err(CoreError::EmptyEnsemble);
        }
        if member_votes.len() != self.members.len() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} member votes", self.members.len()),
                found: format!("{}", member_votes.len()),
            });
        }
        let mut lhs = 0.0f64;
        let mut rhs = 0.0f64;
        for i in self.voting_indices() {
            let weight = (1.0 / self.members[i].1.as_f64()).ln();
            lhs += weight * member_votes[i] as f64;
            rhs += 0.5 * weight;
        }
        Ok(u8::from(lhs >= rhs))
    }

    /// Vote using a per-member prediction closure.
    pub fn predict_with<E>(
        &self,
        mut predict: impl FnMut(&M) -> std::result::Result<u8, E>,
    ) -> std::result::Result<u8, E>
    where
        E: From<CoreError>,
    {
        let votes: Vec<u8> = self
            .members
            .iter()
            .map(|(m, _)| predict(m))
            .collect::<std::result::Result<_, E>>()?;
        Ok(self.vote(&votes)?)
    }
}

/// Per-iteration log record, one JSON line per round in the run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoostRound {
    pub t: usize,
    pub epsilon_t: f64,
    pub beta_t: f64,
    /// Unweighted accuracy of this round's model on the target training set.
    pub target_accuracy: f64,
    /// Share of the normalized distribution held by auxiliary instances.
    pub aux_weight_mass: f64,
}

/// Full boosting outcome: the ensemble, the per-round log and the final raw
/// weight vector.
#[derive(Debug)]
pub struct BoostRun<M, F> {
    pub ensemble: BoostEnsemble<M, F>,
    pub rounds: Vec<BoostRound>,
    pub final_weights: Vec<F>,
}

/// Run the boosting loop. `labels` spans all n + m instances in layout order
/// (weak labels for the auxiliary block, gold labels for the target block);
/// `initial_weights` as produced by `init_weights`.
pub fn run_boost<F: Real, L: WeightedLearner<F>>(
    learner: &mut L,
    labels: &[u8],
    n: usize,
    m: usize,
    initial_weights: Vec<F>,
    cfg: &BoostConfig,
) -> Result<BoostRun<L::Model, F>> {
    cfg.validate()?;
    if n < 2 || m < 1 {
        return Err(CoreError::InvalidInput(format!(
            "need n >= 2 auxiliary and m >= 1 target instances, got n={n}, m={m}"
        )));
    }
    if labels.len() != n + m || initial_weights.len() != n + m {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{} labels and weights", n + m),
            found: format!("{} labels, {} weights", labels.len(), initial_weights.len()),
        });
    }

    let mut w = initial_weights;
    let mut members = Vec::new();
    let mut rounds = Vec::new();
    for t in 1..=cfg.iterations {
        let wrap = |e: CoreError| CoreError::BoostIteration { iteration: t, source: Box::new(e) };
        let p = normalize(&w).map_err(wrap)?;
        let model = learner.train(&p, t).map_err(wrap)?;
        let predictions = learner.predict_all(&model).map_err(wrap)?;
        if predictions.len() != n + m {
            return Err(wrap(CoreError::ShapeMismatch {
                expected: format!("{} predictions", n + m),
                found: format!("{}", predictions.len()),
            }));
        }
        let epsilon = target_error(&predictions[n..], &labels[n..], &w[n..]).map_err(wrap)?;
        let decision = compute_betas(epsilon, n, cfg.iterations, cfg).map_err(wrap)?;
        let BetaDecision::Proceed { beta_t, beta, epsilon_used } = decision else {
            break;
        };
        let correct_target = predictions[n..]
            .iter()
            .zip(&labels[n..])
            .filter(|(p, l)| p == l)
            .count();
        rounds.push(BoostRound {
            t,
            epsilon_t: epsilon_used.as_f64(),
            beta_t: beta_t.as_f64(),
            target_accuracy: correct_target as f64 / m as f64,
            aux_weight_mass: p[..n].iter().map(|x| x.as_f64()).sum(),
        });
        members.push((model, beta_t));
        w = update_weights(&w, &predictions, labels, beta, beta_t, n);
    }
    if members.is_empty() {
        return Err(CoreError::NoWeakLearnerEdge);
    }
    Ok(BoostRun {
        ensemble: BoostEnsemble { members, vote_range: cfg.vote_range },
        rounds,
        final_weights: w,
    })
}
