//! Browser demo of the forecasting engine, exposed through wasm-bindgen.
//!
//! Three interactive operations back the static page in `index.html`:
//!
//! - [`substitution_step`] — solve the substitution equation for a
//!   hand-picked generalized prediction and show the resulting forecast;
//! - [`loss_curves`] — run the aggregator over a synthetic cohort and
//!   return every expert's cumulative loss relative to the aggregator
//!   (the flat zero line is the aggregator itself);
//! - [`window_errors`] — error fractions of the CA125 rule, the
//!   aggregator and the best single rule over sliding time windows.
//!
//! Each function returns a JSON string: either the payload or
//! `{"error": "..."}`. Keeping the interface at strings avoids any
//! framework glue on the JS side.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use brier_aa::aggregation::{run_online, substitute};
use brier_aa::experts::{build_pool, power_law_prior};
use brier_aa::game::OutcomeSpace;
use brier_aa::stats::{pool_events, window_sweep, GridSpec, SweepConfig};
use brier_aa::synth::{generate, SynthConfig};

fn to_json<T: Serialize>(result: Result<T, brier_aa::Error>) -> String {
    #[derive(Serialize)]
    struct Failure {
        error: String,
    }
    match result {
        Ok(payload) => serde_json::to_string(&payload)
            .unwrap_or_else(|e| format!("{{\"error\":\"serialization: {e}\"}}")),
        Err(e) => serde_json::to_string(&Failure {
            error: e.to_string(),
        })
        .expect("failure payload serializes"),
    }
}

fn demo_config(
    seed: u32,
    triplets: u32,
    peaks: u32,
    signal_strength: f64,
    signal_horizon: f64,
) -> SynthConfig {
    SynthConfig {
        n_triplets: triplets as usize,
        n_peaks: peaks as u16,
        signal_strength,
        signal_horizon,
        informative_peaks: [2u16, 3, 7]
            .iter()
            .copied()
            .filter(|&p| p <= peaks as u16)
            .collect(),
        seed: seed as u64,
    }
}

#[derive(Serialize)]
struct SubstitutionView {
    s: f64,
    gamma: Vec<f64>,
    spent: f64,
}

/// Solve `sum (s - g)^+ = 2` for the given generalized prediction.
#[wasm_bindgen]
pub fn substitution_step(g: &[f64]) -> String {
    to_json(substitute(g).map(|(gamma, s)| {
        let spent = g.iter().map(|&v| (s - v).max(0.0)).sum();
        SubstitutionView {
            s,
            gamma: gamma.probs().to_vec(),
            spent,
        }
    }))
}

#[derive(Serialize)]
struct LossCurves {
    /// Rule names, one per series.
    experts: Vec<String>,
    /// Cumulative expert loss minus cumulative aggregator loss, per step.
    series: Vec<Vec<f64>>,
    steps: usize,
    /// `ln K`, the uniform-prior regret guarantee.
    ln_k: f64,
}

/// Run the aggregator over a synthetic cohort; `power_d = 0` means a
/// uniform prior, otherwise the power-law prior with that coefficient.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn loss_curves(
    seed: u32,
    triplets: u32,
    peaks: u32,
    signal_strength: f64,
    signal_horizon: f64,
    eta: f64,
    power_d: f64,
    categorical: bool,
) -> String {
    let result = (|| {
        let cohort = generate(&demo_config(
            seed,
            triplets,
            peaks,
            signal_strength,
            signal_horizon,
        ))?;
        let pool = build_pool(cohort.n_peaks() as u16)?;
        let prior = if power_d == 0.0 {
            vec![1.0; pool.len()]
        } else {
            power_law_prior(&pool, power_d)?
        };
        let ordered = cohort.order_chronological();
        let events = pool_events(&ordered, &pool)?;
        let records = run_online(OutcomeSpace::triplet(), &prior, eta, &events, categorical)?;

        let mut series = vec![Vec::with_capacity(records.len()); pool.len()];
        let mut learner_cum = 0.0;
        let mut expert_cum = vec![0.0f64; pool.len()];
        for record in &records {
            learner_cum += record.learner_loss;
            for ((cum, loss), curve) in expert_cum
                .iter_mut()
                .zip(&record.expert_losses)
                .zip(&mut series)
            {
                *cum += loss;
                curve.push(*cum - learner_cum);
            }
        }
        Ok(LossCurves {
            experts: pool.iter().map(|e| e.to_string()).collect(),
            steps: records.len(),
            series,
            ln_k: (pool.len() as f64).ln(),
        })
    })();
    to_json(result)
}

#[derive(Serialize)]
struct WindowErrorRow {
    t: f64,
    size: usize,
    ca125: Option<f64>,
    aa: Option<f64>,
    best: Option<f64>,
}

/// Error fractions per sliding window for the CA125 rule, the aggregator
/// at `(d, eta)`, and the best single rule.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn window_errors(
    seed: u32,
    triplets: u32,
    peaks: u32,
    signal_strength: f64,
    signal_horizon: f64,
    d: f64,
    eta: f64,
    theta: f64,
    t_max: u32,
) -> String {
    let result = (|| {
        let cohort = generate(&demo_config(
            seed,
            triplets,
            peaks,
            signal_strength,
            signal_horizon,
        ))?;
        let pool = build_pool(cohort.n_peaks() as u16)?;
        let config = SweepConfig {
            d,
            eta,
            // The demo only reads the error columns; one Monte-Carlo trial
            // on a one-cell grid keeps the p-value machinery out of the way.
            grid: GridSpec::single(d, eta)?,
            n_trials: 1,
            seed: seed as u64,
            closed_right: false,
        };
        let t_values: Vec<f64> = (0..=t_max).map(f64::from).collect();
        let rows = window_sweep(&cohort, &t_values, theta, &pool, &config)?;
        let view: Vec<WindowErrorRow> = rows
            .iter()
            .map(|row| {
                let fraction = |e: Option<f64>| {
                    e.filter(|_| row.window_size > 0)
                        .map(|e| e / row.window_size as f64)
                };
                WindowErrorRow {
                    t: row.t,
                    size: row.window_size,
                    ca125: fraction(row.ca125_e),
                    aa: fraction(row.aa_e),
                    best: fraction(row.min_e),
                }
            })
            .collect();
        Ok(view)
    })();
    to_json(result)
}
