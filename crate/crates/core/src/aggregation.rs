//! The Strong Aggregating Algorithm for the Brier game.
//!
//! Each round the aggregator turns the experts' probability forecasts into
//! a generalized prediction
//!
//! ```text
//! G(omega) = -(1/eta) * ln( sum_k w_k * exp(-eta * loss(omega, gamma_k)) )
//! ```
//!
//! and maps it back onto the probability simplex through the substitution
//! function: solve `sum_omega (s - G(omega))^+ = 2` for `s` and output
//! `gamma(omega) = (s - G(omega))^+ / 2`. After the outcome is revealed,
//! every expert's weight decays by `exp(-eta * loss)`.
//!
//! Numerical notes: `G` is evaluated with the log-sum-exp trick, weights are
//! kept normalized to sum 1 after every update (predictions are invariant to
//! a common scaling of the weights, and normalization keeps long runs away
//! from underflow), and the substitution solve is exact water filling over
//! the sorted `G` values rather than iterative root finding — the function
//! `s -> sum (s - G)^+` is piecewise linear and increasing, so the solution
//! is found by a sorted prefix scan.

use crate::error::{Error, Result};
use crate::game::{argmax_uniform, brier_loss, Distribution, OutcomeSpace};

/// State of the aggregator: one positive weight per expert plus the
/// learning rate. Weights are stored normalized to sum 1.
#[derive(Debug, Clone)]
pub struct AggregatorState {
    weights: Vec<f64>,
    eta: f64,
    space: OutcomeSpace,
}

impl AggregatorState {
    /// Start from an explicit prior. The prior may be unnormalized; it is
    /// normalized here once. Entries must be positive and finite.
    pub fn with_prior(space: OutcomeSpace, prior: &[f64], eta: f64) -> Result<Self> {
        if prior.is_empty() {
            return Err(Error::config("expert pool must not be empty"));
        }
        if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
            return Err(Error::config(format!(
                "learning rate must be in (0, 1], got {eta}"
            )));
        }
        let mut sum = 0.0;
        for (k, &w) in prior.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::config(format!(
                    "prior weight of expert {k} must be positive and finite, got {w}"
                )));
            }
            sum += w;
        }
        let weights = prior.iter().map(|w| w / sum).collect();
        Ok(AggregatorState {
            weights,
            eta,
            space,
        })
    }

    /// Uniform prior over `num_experts` experts.
    pub fn uniform(space: OutcomeSpace, num_experts: usize, eta: f64) -> Result<Self> {
        if num_experts == 0 {
            return Err(Error::config("expert pool must not be empty"));
        }
        Self::with_prior(space, &vec![1.0; num_experts], eta)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn space(&self) -> OutcomeSpace {
        self.space
    }

    pub fn num_experts(&self) -> usize {
        self.weights.len()
    }
}

fn check_expert_preds(state: &AggregatorState, expert_preds: &[Distribution]) -> Result<()> {
    if expert_preds.len() != state.num_experts() {
        return Err(Error::config(format!(
            "expected {} expert predictions, got {}",
            state.num_experts(),
            expert_preds.len()
        )));
    }
    for (k, pred) in expert_preds.iter().enumerate() {
        if pred.len() != state.space.size() {
            return Err(Error::input(format!(
                "expert {k} predicts over {} outcomes, space has {}",
                pred.len(),
                state.space.size()
            )));
        }
    }
    Ok(())
}

/// The generalized prediction `G(omega)` for the current weights, one entry
/// per outcome. Computed via log-sum-exp; all entries are finite.
pub fn generalized_prediction(
    state: &AggregatorState,
    expert_preds: &[Distribution],
) -> Result<Vec<f64>> {
    check_expert_preds(state, expert_preds)?;
    let eta = state.eta;
    let n = state.space.size();
    let mut g = Vec::with_capacity(n);
    // Per outcome: G = -(1/eta) * LSE_k( ln w_k - eta * loss_k ), where the
    // max exponent is subtracted before exponentiating.
    let mut exponents = vec![0.0f64; state.num_experts()];
    for omega in 0..n {
        let mut max = f64::NEG_INFINITY;
        for (k, pred) in expert_preds.iter().enumerate() {
            let loss = brier_loss(omega, pred)?;
            let a = state.weights[k].ln() - eta * loss;
            exponents[k] = a;
            if a > max {
                max = a;
            }
        }
        if !max.is_finite() {
            return Err(Error::numeric(
                "all expert weights vanished; cannot form a generalized prediction",
            ));
        }
        let sum: f64 = exponents.iter().map(|a| (a - max).exp()).sum();
        g.push(-(max + sum.ln()) / eta);
    }
    Ok(g)
}

/// Solve `sum_omega (s - g[omega])^+ = 2` exactly and return the resulting
/// prediction `gamma(omega) = (s - g[omega])^+ / 2` together with `s`.
///
/// Water filling: sort `g` ascending; for support size `m` the candidate
/// level is `s_m = (2 + sum of the m smallest) / m`, and the first `m` whose
/// level does not spill over the next value (`s_m <= g_(m+1)`) is the
/// solution.
pub fn substitute(g: &[f64]) -> Result<(Distribution, f64)> {
    if g.len() < 2 {
        return Err(Error::input(format!(
            "generalized prediction needs at least 2 outcomes, got {}",
            g.len()
        )));
    }
    for (i, &v) in g.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::numeric(format!(
                "generalized prediction entry {i} is not finite: {v}"
            )));
        }
    }
    let mut sorted: Vec<f64> = g.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    let mut prefix = 0.0;
    let mut s = f64::NAN;
    for m in 1..=sorted.len() {
        prefix += sorted[m - 1];
        let level = (2.0 + prefix) / m as f64;
        if m == sorted.len() || level <= sorted[m] {
            s = level;
            break;
        }
    }
    let probs: Vec<f64> = g.iter().map(|&v| (s - v).max(0.0) / 2.0).collect();
    let prediction = Distribution::new(probs)?;
    Ok((prediction, s))
}

/// One prediction of the aggregator: substitution applied to the
/// generalized prediction. Does not mutate the state.
pub fn aa_step(state: &AggregatorState, expert_preds: &[Distribution]) -> Result<Distribution> {
    let g = generalized_prediction(state, expert_preds)?;
    substitute(&g).map(|(prediction, _)| prediction)
}

/// Weight update after the outcome is revealed: each expert's weight decays
/// by `exp(-eta * loss)`, then the vector is renormalized to sum 1.
pub fn update_weights(
    state: &AggregatorState,
    outcome: usize,
    expert_preds: &[Distribution],
) -> Result<AggregatorState> {
    check_expert_preds(state, expert_preds)?;
    if !state.space.contains(outcome) {
        return Err(Error::input(format!(
            "outcome {outcome} out of range for a space of size {}",
            state.space.size()
        )));
    }
    let eta = state.eta;
    let mut weights: Vec<f64> = Vec::with_capacity(state.num_experts());
    for (k, pred) in expert_preds.iter().enumerate() {
        let loss = brier_loss(outcome, pred)?;
        weights.push(state.weights[k] * (-eta * loss).exp());
    }
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::numeric(format!(
            "weight mass degenerated to {sum} after update"
        )));
    }
    for w in &mut weights {
        *w /= sum;
    }
    Ok(AggregatorState {
        weights,
        eta,
        space: state.space,
    })
}

/// Maximum rule: uniform distribution over the argmax set of the input,
/// ties decided at [`crate::game::TIE_TOL`]. Idempotent.
pub fn sharpen(prediction: &Distribution) -> Distribution {
    argmax_uniform(prediction.probs()).expect("probabilities are finite")
}

/// One recorded round of an online run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// What the aggregator emitted this round (sharpened in categorical runs).
    pub prediction: Distribution,
    /// The observed outcome.
    pub outcome: usize,
    /// Brier loss of `prediction` against `outcome`.
    pub learner_loss: f64,
    /// Brier losses of the raw expert predictions against `outcome`.
    pub expert_losses: Vec<f64>,
}

/// Run the aggregator over a fixed sequence of rounds.
///
/// Each event is the experts' predictions for that round plus the outcome
/// that was then observed. When `categorical` is set, the emitted
/// prediction is sharpened by the maximum rule; the weight update always
/// uses the experts' raw probability predictions.
pub fn run_online(
    space: OutcomeSpace,
    prior: &[f64],
    eta: f64,
    events: &[(Vec<Distribution>, usize)],
    categorical: bool,
) -> Result<Vec<StepRecord>> {
    if events.is_empty() {
        return Err(Error::input("event sequence must not be empty"));
    }
    let mut state = AggregatorState::with_prior(space, prior, eta)?;
    let mut records = Vec::with_capacity(events.len());
    for (expert_preds, outcome) in events {
        let mut prediction = aa_step(&state, expert_preds)?;
        if categorical {
            prediction = sharpen(&prediction);
        }
        let learner_loss = brier_loss(*outcome, &prediction)?;
        let expert_losses = expert_preds
            .iter()
            .map(|pred| brier_loss(*outcome, pred))
            .collect::<Result<Vec<f64>>>()?;
        state = update_weights(&state, *outcome, expert_preds)?;
        records.push(StepRecord {
            prediction,
            outcome: *outcome,
            learner_loss,
            expert_losses,
        });
    }
    Ok(records)
}

/// Cumulative learner loss of a run.
pub fn cumulative_loss(records: &[StepRecord]) -> f64 {
    records.iter().map(|r| r.learner_loss).sum()
}

/// Cumulative loss of each expert over a run.
pub fn cumulative_expert_losses(records: &[StepRecord]) -> Vec<f64> {
    if records.is_empty() {
        return Vec::new();
    }
    let mut totals = vec![0.0; records[0].expert_losses.len()];
    for record in records {
        for (total, loss) in totals.iter_mut().zip(&record.expert_losses) {
            *total += loss;
        }
    }
    totals
}
