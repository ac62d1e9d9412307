//! The Brier game: finite outcome spaces, probability distributions over
//! them, and the quadratic (Brier) loss.
//!
//! A prediction is a probability measure on a finite set of outcomes; the
//! loss of predicting `gamma` when outcome `omega` happens is
//! `sum_o (gamma[o] - delta_omega[o])^2`, which lies in `[0, 2]`. Half of
//! the Brier loss counts errors exactly when predictions are strict
//! (point masses), which is how error counts are reported downstream.
//!
//! Outcome indices are 0-based everywhere in this crate; user-facing
//! tables convert to 1-based sample positions at the reporting layer.

use crate::error::{Error, Result};

/// Tolerance for the sum-to-one check when constructing a [`Distribution`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Tie tolerance used by the maximum rule: values within this distance of
/// the maximum count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// A finite, non-empty outcome space with at least two outcomes.
///
/// The triplet game uses `|Omega| = 3` (one case among three samples).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeSpace {
    size: usize,
}

impl OutcomeSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::config(format!(
                "outcome space must have at least 2 outcomes, got {size}"
            )));
        }
        Ok(OutcomeSpace { size })
    }

    /// The space of the triplet game: three sample positions.
    pub fn triplet() -> Self {
        OutcomeSpace { size: 3 }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, outcome: usize) -> bool {
        outcome < self.size
    }
}

/// A probability measure on an [`OutcomeSpace`], stored as a dense vector.
///
/// Invariants: every entry is non-negative and the entries sum to 1 within
/// [`SIMPLEX_TOL`]. The constructor renormalizes once to make the sum exact;
/// values are never renormalized afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::input(format!(
                "a distribution needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::numeric(format!(
                    "probability {i} is not finite: {p}"
                )));
            }
            if p < 0.0 {
                return Err(Error::input(format!("probability {i} is negative: {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::input(format!(
                "probabilities sum to {sum}, expected 1 within {SIMPLEX_TOL}"
            )));
        }
        let mut probs = probs;
        for p in &mut probs {
            *p /= sum;
        }
        Ok(Distribution { probs })
    }

    /// Uniform distribution over `space`.
    pub fn uniform(space: OutcomeSpace) -> Self {
        Distribution {
            probs: vec![1.0 / space.size() as f64; space.size()],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Sum of squared entries; lets the Brier loss against any outcome be
    /// recovered as `q - 2*p[omega] + 1`.
    pub fn squared_mass(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }
}

/// The probability measure concentrated at `outcome`.
pub fn point_mass(outcome: usize, space: OutcomeSpace) -> Result<Distribution> {
    if !space.contains(outcome) {
        return Err(Error::input(format!(
            "outcome {outcome} out of range for a space of size {}",
            space.size()
        )));
    }
    let mut probs = vec![0.0; space.size()];
    probs[outcome] = 1.0;
    Ok(Distribution { probs })
}

/// Brier loss of predicting `prediction` when `outcome` happens:
/// `sum_o (prediction[o] - delta_outcome[o])^2`, in `[0, 2]`.
pub fn brier_loss(outcome: usize, prediction: &Distribution) -> Result<f64> {
    if outcome >= prediction.len() {
        return Err(Error::input(format!(
            "outcome {outcome} out of range for a prediction of length {}",
            prediction.len()
        )));
    }
    let mut loss = 0.0;
    for (o, &p) in prediction.probs.iter().enumerate() {
        let target = if o == outcome { 1.0 } else { 0.0 };
        let d = p - target;
        loss += d * d;
    }
    Ok(loss)
}

/// Half of the Brier loss. For strict (point-mass) predictions this is 0
/// on a correct prediction and 1 on a wrong one, so summing it counts
/// errors.
pub fn half_loss(outcome: usize, prediction: &Distribution) -> Result<f64> {
    brier_loss(outcome, prediction).map(|l| l / 2.0)
}

/// Uniform distribution over the argmax set of `values`, with ties decided
/// at tolerance [`TIE_TOL`]. This is the maximum rule shared by expert
/// score conversion and by the categorical variant of the aggregator.
pub(crate) fn argmax_uniform(values: &[f64]) -> Result<Distribution> {
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::numeric(format!("value {i} is not finite: {v}")));
        }
        if v > max {
            max = v;
        }
    }
    let tied = values.iter().filter(|&&v| v >= max - TIE_TOL).count();
    let share = 1.0 / tied as f64;
    let probs = values
        .iter()
        .map(|&v| if v >= max - TIE_TOL { share } else { 0.0 })
        .collect();
    Ok(Distribution { probs })
}
