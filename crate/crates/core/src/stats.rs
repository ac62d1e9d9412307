//! Windowed error statistics, parameter grid search, and Monte-Carlo
//! permutation p-values.
//!
//! The error of a window is the total half Brier loss of the categorical
//! aggregator run online over the window's triplets in chronological
//! order, with a power-law prior of coefficient `d` and learning rate
//! `eta`. The test statistic for a window is the minimum of that error
//! over a `(d, eta)` grid; its p-value comes from re-running the grid
//! minimization on label-permuted copies of the window and counting how
//! often the permuted statistic does not exceed the observed one:
//! `p = (Q + 1) / (N + 1)`.
//!
//! Determinism: trial `j` draws its permutation from stream `j` of a
//! ChaCha8 generator seeded with the run seed, so results are identical
//! whatever the evaluation order or thread count. Expert forecasts depend
//! only on features, never on labels, so each window's expert loss table
//! is computed once and shared across every grid cell and trial; the
//! aggregator itself is re-run from its prior for every `(d, eta)` cell.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use std::path::Path;

use crate::cohort::{Cohort, Triplet};
use crate::error::{Error, Result};
use crate::experts::{expert_predict, power_law_prior, CombinationExpert};
use crate::game::{Distribution, TIE_TOL};
use crate::rngutil::uniform_usize;

/// Tolerance for comparing a permuted statistic against the observed one
/// (`E <= E_0` with half-losses that can be fractional under ties).
pub const COMPARISON_TOL: f64 = 1e-9;

/// The `(d, eta)` search grid. Values are kept sorted ascending so that
/// tied minima resolve toward the smaller `d`, then the smaller `eta`.
#[derive(Debug, Clone)]
pub struct GridSpec {
    d_values: Vec<f64>,
    eta_values: Vec<f64>,
}

impl GridSpec {
    pub fn new(mut d_values: Vec<f64>, mut eta_values: Vec<f64>) -> Result<Self> {
        if d_values.is_empty() || eta_values.is_empty() {
            return Err(Error::config("grid must have at least one d and one eta"));
        }
        for &d in &d_values {
            if !d.is_finite() || d < 1.0 {
                return Err(Error::config(format!(
                    "grid d values must be >= 1, got {d}"
                )));
            }
        }
        for &eta in &eta_values {
            if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
                return Err(Error::config(format!(
                    "grid eta values must be in (0, 1], got {eta}"
                )));
            }
        }
        d_values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        eta_values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(GridSpec {
            d_values,
            eta_values,
        })
    }

    /// The default grid: `d` from 1.1 to 2.0 in steps of 0.1 and `eta`
    /// from 0.1 to 1.0 in steps of 0.05 (190 cells).
    pub fn default_grid() -> Self {
        GridSpec {
            d_values: (11..=20).map(|i| i as f64 / 10.0).collect(),
            eta_values: (2..=20).map(|j| j as f64 / 20.0).collect(),
        }
    }

    /// A one-cell grid.
    pub fn single(d: f64, eta: f64) -> Result<Self> {
        GridSpec::new(vec![d], vec![eta])
    }

    pub fn d_values(&self) -> &[f64] {
        &self.d_values
    }

    pub fn eta_values(&self) -> &[f64] {
        &self.eta_values
    }

    pub fn cells(&self) -> usize {
        self.d_values.len() * self.eta_values.len()
    }
}

/// Result of a permutation test on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueReport {
    /// Window start, in months before diagnosis.
    pub t: f64,
    /// Number of triplets in the window.
    pub window_size: usize,
    /// Observed statistic: grid-minimized error on the real labels.
    pub e0: f64,
    /// Trials whose statistic did not exceed `e0`.
    pub q: usize,
    pub n_trials: usize,
    /// `(q + 1) / (n_trials + 1)`.
    pub p_value: f64,
}

/// How the windowed error treats history across triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrMode {
    /// One online run over the window; each triplet's error is the half
    /// loss of the step it occupies. This is the default.
    WindowedRun,
    /// Every triplet is predicted by a fresh aggregator straight from the
    /// prior (no weight evolution across the window).
    FreshPerTriplet,
}

// ---------------------------------------------------------------------------
// Window loss table and the in-place aggregator engine
// ---------------------------------------------------------------------------

/// Precomputed Brier losses `loss[step][expert][omega]` over a window in
/// chronological order. Expert forecasts depend only on features, so the
/// table is shared by all grid cells and permutation trials; only the
/// outcome vector varies.
struct WindowTable {
    n_steps: usize,
    n_experts: usize,
    /// Flattened `[step][expert][omega]` with `omega` in `0..3`.
    loss: Vec<f64>,
    /// Case positions in chronological order (the real labels).
    real_outcomes: Vec<usize>,
}

/// Triplets of a window in chronological order (date, then id).
fn order_window(window: &[Triplet]) -> Vec<&Triplet> {
    let mut ordered: Vec<&Triplet> = window.iter().collect();
    ordered.sort_by(|a, b| {
        a.measurement_date()
            .cmp(&b.measurement_date())
            .then_with(|| a.id().cmp(b.id()))
    });
    ordered
}

impl WindowTable {
    fn build(ordered: &[&Triplet], pool: &[CombinationExpert]) -> Result<WindowTable> {
        if ordered.is_empty() {
            return Err(Error::input("window is empty"));
        }
        if pool.is_empty() {
            return Err(Error::config("expert pool must not be empty"));
        }
        let n_steps = ordered.len();
        let n_experts = pool.len();
        let mut loss = Vec::with_capacity(n_steps * n_experts * 3);
        let mut real_outcomes = Vec::with_capacity(n_steps);
        for triplet in ordered {
            real_outcomes.push(triplet.case_position());
            for expert in pool {
                let pred = expert_predict(expert, triplet)?;
                let q = pred.squared_mass();
                for omega in 0..3 {
                    loss.push(q - 2.0 * pred.probs()[omega] + 1.0);
                }
            }
        }
        Ok(WindowTable {
            n_steps,
            n_experts,
            loss,
            real_outcomes,
        })
    }

    fn step_losses(&self, step: usize) -> &[f64] {
        let w = self.n_experts * 3;
        &self.loss[step * w..(step + 1) * w]
    }

    /// Total half loss of one expert against an outcome vector.
    fn expert_err(&self, expert: usize, outcomes: &[usize]) -> f64 {
        let mut total = 0.0;
        for (step, &outcome) in outcomes.iter().enumerate() {
            total += self.step_losses(step)[expert * 3 + outcome];
        }
        total / 2.0
    }

    /// Minimum total half loss over a set of experts.
    fn min_expert_err(&self, experts: &[usize], outcomes: &[usize]) -> f64 {
        experts
            .iter()
            .map(|&k| self.expert_err(k, outcomes))
            .fold(f64::INFINITY, f64::min)
    }

    /// Total half loss of the categorical aggregator over the window.
    ///
    /// `log_prior` is the normalized log prior; `evolve` turns the weight
    /// update off for [`ErrMode::FreshPerTriplet`]. The implementation is
    /// an allocation-free replay of the aggregating algorithm: per step a
    /// log-sum-exp generalized prediction, an exact water-filling
    /// substitution, the maximum rule, then the exponential weight update
    /// and renormalization (in log space).
    fn categorical_aa_err(
        &self,
        log_prior: &[f64],
        eta: f64,
        outcomes: &[usize],
        scratch: &mut AaScratch,
        evolve: bool,
    ) -> f64 {
        let k = self.n_experts;
        scratch.lw.clear();
        scratch.lw.extend_from_slice(log_prior);
        let lw = &mut scratch.lw;
        let mut total = 0.0;
        for (step, &outcome) in outcomes.iter().enumerate() {
            let losses = self.step_losses(step);
            let mut g = [0.0f64; 3];
            for (omega, g_entry) in g.iter_mut().enumerate() {
                let mut max = f64::NEG_INFINITY;
                for kk in 0..k {
                    let a = lw[kk] - eta * losses[kk * 3 + omega];
                    if a > max {
                        max = a;
                    }
                }
                let mut sum = 0.0;
                for kk in 0..k {
                    sum += (lw[kk] - eta * losses[kk * 3 + omega] - max).exp();
                }
                *g_entry = -(max + sum.ln()) / eta;
            }

            // Water filling over the three outcomes.
            let mut sorted = g;
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let mut prefix = 0.0;
            let mut s = f64::NAN;
            for m in 1..=3usize {
                prefix += sorted[m - 1];
                let level = (2.0 + prefix) / m as f64;
                if m == 3 || level <= sorted[m] {
                    s = level;
                    break;
                }
            }
            let gamma = [
                (s - g[0]).max(0.0) / 2.0,
                (s - g[1]).max(0.0) / 2.0,
                (s - g[2]).max(0.0) / 2.0,
            ];

            // Maximum rule, then half Brier loss of the sharpened forecast:
            // with m tied maxima the half loss is (1/m - 2*hit/m + 1) / 2.
            let top = gamma[0].max(gamma[1]).max(gamma[2]);
            let mut tied = 0.0;
            for &p in &gamma {
                if p >= top - TIE_TOL {
                    tied += 1.0;
                }
            }
            let hit = if gamma[outcome] >= top - TIE_TOL {
                1.0
            } else {
                0.0
            };
            total += (1.0 / tied - 2.0 * hit / tied + 1.0) / 2.0;

            if evolve {
                let mut max = f64::NEG_INFINITY;
                for kk in 0..k {
                    lw[kk] -= eta * losses[kk * 3 + outcome];
                    if lw[kk] > max {
                        max = lw[kk];
                    }
                }
                let mut sum = 0.0;
                for w in lw.iter() {
                    sum += (w - max).exp();
                }
                let z = max + sum.ln();
                for w in lw.iter_mut() {
                    *w -= z;
                }
            }
        }
        total
    }

    /// Grid-minimized categorical error; ties resolve to the smallest
    /// `(d, eta)` because the grids are sorted and comparison is strict.
    fn grid_min_err(
        &self,
        grid: &GridSpec,
        log_priors_by_d: &[Vec<f64>],
        outcomes: &[usize],
        scratch: &mut AaScratch,
    ) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (di, log_prior) in log_priors_by_d.iter().enumerate() {
            for (ei, &eta) in grid.eta_values.iter().enumerate() {
                let err = self.categorical_aa_err(log_prior, eta, outcomes, scratch, true);
                if err < best.0 {
                    best = (err, di, ei);
                }
            }
        }
        best
    }
}

struct AaScratch {
    lw: Vec<f64>,
}

impl AaScratch {
    fn new(n_experts: usize) -> Self {
        AaScratch {
            lw: Vec::with_capacity(n_experts),
        }
    }
}

/// Normalized log prior for a pool under the power law with coefficient `d`.
fn normalized_log_prior(pool: &[CombinationExpert], d: f64) -> Result<Vec<f64>> {
    let prior = power_law_prior(pool, d)?;
    let mut lw: Vec<f64> = prior.iter().map(|w| w.ln()).collect();
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = lw.iter().map(|a| (a - max).exp()).sum();
    let z = max + sum.ln();
    for w in &mut lw {
        *w -= z;
    }
    Ok(lw)
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Total half loss of the categorical aggregator over a window, run in
/// chronological order with the power-law prior `d` and learning rate
/// `eta`. Peak intensities must be strictly positive (see
/// [`Cohort::floor_zero_peaks`]).
pub fn err_window(window: &[Triplet], d: f64, eta: f64, pool: &[CombinationExpert]) -> Result<f64> {
    err_window_mode(window, d, eta, pool, ErrMode::WindowedRun)
}

/// [`err_window`] with an explicit history mode.
pub fn err_window_mode(
    window: &[Triplet],
    d: f64,
    eta: f64,
    pool: &[CombinationExpert],
    mode: ErrMode,
) -> Result<f64> {
    if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
        return Err(Error::config(format!(
            "learning rate must be in (0, 1], got {eta}"
        )));
    }
    let ordered = order_window(window);
    let table = WindowTable::build(&ordered, pool)?;
    let log_prior = normalized_log_prior(pool, d)?;
    let mut scratch = AaScratch::new(pool.len());
    Ok(table.categorical_aa_err(
        &log_prior,
        eta,
        &table.real_outcomes,
        &mut scratch,
        mode == ErrMode::WindowedRun,
    ))
}

/// Exhaustive minimum of [`err_window`] over a grid. Returns the minimum
/// and its `(d, eta)`; ties resolve toward smaller `d`, then smaller `eta`.
pub fn min_err_grid(
    window: &[Triplet],
    grid: &GridSpec,
    pool: &[CombinationExpert],
) -> Result<(f64, (f64, f64))> {
    let ordered = order_window(window);
    let table = WindowTable::build(&ordered, pool)?;
    let log_priors = grid
        .d_values
        .iter()
        .map(|&d| normalized_log_prior(pool, d))
        .collect::<Result<Vec<_>>>()?;
    let mut scratch = AaScratch::new(pool.len());
    let (err, di, ei) = table.grid_min_err(grid, &log_priors, &table.real_outcomes, &mut scratch);
    Ok((err, (grid.d_values[di], grid.eta_values[ei])))
}

/// Move each triplet's case label to a uniformly random position (features
/// untouched). One uniform draw per triplet, in slice order.
pub fn permute_labels(window: &[Triplet], rng: &mut ChaCha8Rng) -> Vec<Triplet> {
    window
        .iter()
        .map(|t| {
            t.with_case_position(uniform_usize(rng, 3))
                .expect("positions 0..3 are valid")
        })
        .collect()
}

/// Random outcome vector for trial `j`: stream `j` of ChaCha8 seeded with
/// `seed`, one uniform draw per chronological step.
fn draw_outcomes(seed: u64, trial: u64, n_steps: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    (0..n_steps).map(|_| uniform_usize(&mut rng, 3)).collect()
}

fn run_trials<T, F>(n_trials: usize, trial: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (1..=n_trials as u64).into_par_iter().map(trial).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (1..=n_trials as u64).map(trial).collect()
    }
}

/// Monte-Carlo permutation p-value for one window.
///
/// The observed statistic `E_0` is the grid-minimized categorical error on
/// the real labels. Each of the `n_trials` trials reassigns every
/// triplet's case label uniformly at random, recomputes the grid minimum
/// `E`, and counts `E <= E_0` (at [`COMPARISON_TOL`]); the p-value is
/// `(Q + 1) / (n_trials + 1)`. `t` only labels the report.
pub fn pvalue(
    window: &[Triplet],
    grid: &GridSpec,
    pool: &[CombinationExpert],
    n_trials: usize,
    seed: u64,
    t: f64,
) -> Result<PValueReport> {
    if n_trials == 0 {
        return Err(Error::config("n_trials must be at least 1"));
    }
    let ordered = order_window(window);
    let table = WindowTable::build(&ordered, pool)?;
    let log_priors = grid
        .d_values
        .iter()
        .map(|&d| normalized_log_prior(pool, d))
        .collect::<Result<Vec<_>>>()?;

    let mut scratch = AaScratch::new(pool.len());
    let (e0, _, _) = table.grid_min_err(grid, &log_priors, &table.real_outcomes, &mut scratch);

    let hits = run_trials(n_trials, |trial| {
        let outcomes = draw_outcomes(seed, trial, table.n_steps);
        let mut scratch = AaScratch::new(table.n_experts);
        let (e, _, _) = table.grid_min_err(grid, &log_priors, &outcomes, &mut scratch);
        e <= e0 + COMPARISON_TOL
    });
    let q = hits.iter().filter(|&&hit| hit).count();

    Ok(PValueReport {
        t,
        window_size: table.n_steps,
        e0,
        q,
        n_trials,
        p_value: (q as f64 + 1.0) / (n_trials as f64 + 1.0),
    })
}

/// Expert forecasts plus observed outcome for each triplet, in the given
/// order — the event stream consumed by
/// [`crate::aggregation::run_online`].
pub fn pool_events(
    ordered: &[&Triplet],
    pool: &[CombinationExpert],
) -> Result<Vec<(Vec<Distribution>, usize)>> {
    ordered
        .iter()
        .map(|triplet| {
            let preds = pool
                .iter()
                .map(|expert| expert_predict(expert, triplet))
                .collect::<Result<Vec<_>>>()?;
            Ok((preds, triplet.case_position()))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Window sweep (Table-1-format report)
// ---------------------------------------------------------------------------

/// Configuration of a windowed sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Power-law coefficient of the fixed-parameter aggregator column.
    pub d: f64,
    /// Learning rate of the fixed-parameter aggregator column.
    pub eta: f64,
    /// Grid minimized by the test statistic.
    pub grid: GridSpec,
    pub n_trials: usize,
    pub seed: u64,
    /// Include the right boundary of each window (`[t, t+theta]` instead
    /// of `[t, t+theta)`).
    pub closed_right: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            d: 1.2,
            eta: 0.65,
            grid: GridSpec::default_grid(),
            n_trials: 10_000,
            seed: 0,
            closed_right: false,
        }
    }
}

/// One row of the windowed report; `None` marks statistics that do not
/// exist for the window (empty window, or a rule absent from the pool).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub t: f64,
    pub window_size: usize,
    /// Errors / p-value of the CA125-only rule.
    pub ca125_e: Option<f64>,
    pub ca125_p: Option<f64>,
    /// Errors of the aggregator at the fixed `(d, eta)`; p-value of the
    /// grid-minimized statistic.
    pub aa_e: Option<f64>,
    pub aa_p: Option<f64>,
    /// Minimum errors over all rules in the pool, and the p-value of the
    /// best-rule statistic.
    pub min_e: Option<f64>,
    pub min_p: Option<f64>,
    /// Errors of `lnC - lnI3` and `lnC - 0.5 lnI3`; p-value of the best
    /// CA125+peak-3 rule.
    pub c3_1_e: Option<f64>,
    pub c3_2_e: Option<f64>,
    pub peak3_p: Option<f64>,
    /// Errors of `lnC - lnI2`; p-value of the best CA125+peak-2 rule.
    pub c2_e: Option<f64>,
    pub peak2_p: Option<f64>,
}

impl WindowRow {
    fn empty(t: f64) -> Self {
        WindowRow {
            t,
            window_size: 0,
            ca125_e: None,
            ca125_p: None,
            aa_e: None,
            aa_p: None,
            min_e: None,
            min_p: None,
            c3_1_e: None,
            c3_2_e: None,
            peak3_p: None,
            c2_e: None,
            peak2_p: None,
        }
    }
}

/// Per-trial statistics shared by every method of the sweep.
#[derive(Clone, Copy)]
struct MethodStats {
    aa_grid: f64,
    ca125: Option<f64>,
    pool_min: f64,
    peak3: Option<f64>,
    peak2: Option<f64>,
}

fn find_expert(pool: &[CombinationExpert], v: u8, doubled_w: i8, peak: u16) -> Option<usize> {
    pool.iter().position(|e| {
        e.v() == v && e.doubled_w() == doubled_w && (doubled_w == 0 || e.peak() == Some(peak))
    })
}

fn peak_rule_indices(pool: &[CombinationExpert], peak: u16) -> Vec<usize> {
    pool.iter()
        .enumerate()
        .filter_map(|(i, e)| {
            (e.v() == 1 && e.doubled_w() != 0 && e.peak() == Some(peak)).then_some(i)
        })
        .collect()
}

/// Sweep the windows `t_values` of width `theta`, producing one
/// Table-1-shaped row per `t`. Every window's trials reuse the same seed
/// (trial `j` is stream `j` of ChaCha8(seed)), and all methods of a window
/// share its permutations, so a sweep row's p-values equal what
/// [`pvalue`] reports for the same window, grid, pool and seed.
pub fn window_sweep(
    cohort: &Cohort,
    t_values: &[f64],
    theta: f64,
    pool: &[CombinationExpert],
    config: &SweepConfig,
) -> Result<Vec<WindowRow>> {
    if t_values.is_empty() {
        return Err(Error::config("sweep needs at least one window start"));
    }
    if !theta.is_finite() || theta <= 0.0 {
        return Err(Error::config(format!("theta must be > 0, got {theta}")));
    }
    if config.n_trials == 0 {
        return Err(Error::config("n_trials must be at least 1"));
    }

    let ca125_idx = find_expert(pool, 1, 0, 0);
    let c3_1_idx = find_expert(pool, 1, -2, 3);
    let c3_2_idx = find_expert(pool, 1, -1, 3);
    let c2_idx = find_expert(pool, 1, -2, 2);
    let peak3_rules = peak_rule_indices(pool, 3);
    let peak2_rules = peak_rule_indices(pool, 2);
    let all_rules: Vec<usize> = (0..pool.len()).collect();

    let fixed_log_prior = normalized_log_prior(pool, config.d)?;
    let grid_log_priors = config
        .grid
        .d_values
        .iter()
        .map(|&d| normalized_log_prior(pool, d))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let window = cohort.select_window(t, theta, config.closed_right);
        if window.is_empty() {
            rows.push(WindowRow::empty(t));
            continue;
        }
        let ordered = order_window(&window);
        let table = WindowTable::build(&ordered, pool)?;

        let eval = |outcomes: &[usize], scratch: &mut AaScratch| -> MethodStats {
            MethodStats {
                aa_grid: table
                    .grid_min_err(&config.grid, &grid_log_priors, outcomes, scratch)
                    .0,
                ca125: ca125_idx.map(|k| table.expert_err(k, outcomes)),
                pool_min: table.min_expert_err(&all_rules, outcomes),
                peak3: (!peak3_rules.is_empty())
                    .then(|| table.min_expert_err(&peak3_rules, outcomes)),
                peak2: (!peak2_rules.is_empty())
                    .then(|| table.min_expert_err(&peak2_rules, outcomes)),
            }
        };

        let mut scratch = AaScratch::new(pool.len());
        let observed = eval(&table.real_outcomes, &mut scratch);
        let aa_e = table.categorical_aa_err(
            &fixed_log_prior,
            config.eta,
            &table.real_outcomes,
            &mut scratch,
            true,
        );

        let hits = run_trials(config.n_trials, |trial| {
            let outcomes = draw_outcomes(config.seed, trial, table.n_steps);
            let mut scratch = AaScratch::new(table.n_experts);
            let e = eval(&outcomes, &mut scratch);
            let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => a <= b + COMPARISON_TOL,
                _ => false,
            };
            [
                e.aa_grid <= observed.aa_grid + COMPARISON_TOL,
                le(e.ca125, observed.ca125),
                e.pool_min <= observed.pool_min + COMPARISON_TOL,
                le(e.peak3, observed.peak3),
                le(e.peak2, observed.peak2),
            ]
        });
        let mut q = [0usize; 5];
        for hit in &hits {
            for (count, &flag) in q.iter_mut().zip(hit) {
                *count += flag as usize;
            }
        }
        let p = |q: usize| (q as f64 + 1.0) / (config.n_trials as f64 + 1.0);

        rows.push(WindowRow {
            t,
            window_size: table.n_steps,
            ca125_e: observed.ca125,
            ca125_p: observed.ca125.is_some().then(|| p(q[1])),
            aa_e: Some(aa_e),
            aa_p: Some(p(q[0])),
            min_e: Some(observed.pool_min),
            min_p: Some(p(q[2])),
            c3_1_e: c3_1_idx.map(|k| table.expert_err(k, &table.real_outcomes)),
            c3_2_e: c3_2_idx.map(|k| table.expert_err(k, &table.real_outcomes)),
            peak3_p: observed.peak3.is_some().then(|| p(q[3])),
            c2_e: c2_idx.map(|k| table.expert_err(k, &table.real_outcomes)),
            peak2_p: observed.peak2.is_some().then(|| p(q[4])),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

/// Table-format CSV: one row per window with the full column set.
pub fn write_table_csv(rows: &[WindowRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record([
        "t",
        "window_size",
        "ca125_e",
        "ca125_p",
        "aa_e",
        "aa_p",
        "min_e",
        "min_p",
        "c3_1_e",
        "c3_2_e",
        "peak3_p",
        "c2_e",
        "peak2_p",
    ])?;
    for row in rows {
        writer.write_record([
            format!("{}", row.t),
            format!("{}", row.window_size),
            fmt_opt(row.ca125_e),
            fmt_opt(row.ca125_p),
            fmt_opt(row.aa_e),
            fmt_opt(row.aa_p),
            fmt_opt(row.min_e),
            fmt_opt(row.min_p),
            fmt_opt(row.c3_1_e),
            fmt_opt(row.c3_2_e),
            fmt_opt(row.peak3_p),
            fmt_opt(row.c2_e),
            fmt_opt(row.peak2_p),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Error fractions per window and method (`errors / window size`), tidy
/// format for plotting.
pub fn write_error_fraction_csv(rows: &[WindowRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["t", "method", "error_fraction"])?;
    for row in rows {
        let fraction = |e: Option<f64>| {
            e.filter(|_| row.window_size > 0)
                .map(|e| e / row.window_size as f64)
        };
        for (method, value) in [
            ("ca125", fraction(row.ca125_e)),
            ("aa", fraction(row.aa_e)),
            ("min", fraction(row.min_e)),
            ("c3_1", fraction(row.c3_1_e)),
            ("c3_2", fraction(row.c3_2_e)),
            ("c2", fraction(row.c2_e)),
        ] {
            writer.write_record([format!("{}", row.t), method.to_string(), fmt_opt(value)])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Log p-values per window and method, tidy format for plotting.
pub fn write_pvalue_csv(rows: &[WindowRow], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["t", "method", "log10_p"])?;
    for row in rows {
        for (method, value) in [
            ("ca125", row.ca125_p),
            ("aa", row.aa_p),
            ("min", row.min_p),
            ("peak3", row.peak3_p),
            ("peak2", row.peak2_p),
        ] {
            writer.write_record([
                format!("{}", row.t),
                method.to_string(),
                fmt_opt(value.map(f64::log10)),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::run_online;
    use crate::experts::build_pool;
    use crate::game::OutcomeSpace;
    use crate::synth::{generate, SynthConfig};

    fn small_cohort(seed: u64, n: usize, signal: f64) -> Cohort {
        generate(&SynthConfig {
            n_triplets: n,
            n_peaks: 4,
            signal_strength: signal,
            signal_horizon: 15.0,
            informative_peaks: vec![2, 3],
            seed,
        })
        .unwrap()
    }

    #[test]
    fn grid_spec_validation_and_defaults() {
        let grid = GridSpec::default_grid();
        assert_eq!(grid.d_values().len(), 10);
        assert_eq!(grid.eta_values().len(), 19);
        assert_eq!(grid.cells(), 190);
        assert!((grid.d_values()[0] - 1.1).abs() < 1e-12);
        assert!((grid.d_values()[9] - 2.0).abs() < 1e-12);
        assert!((grid.eta_values()[0] - 0.1).abs() < 1e-12);
        assert!((grid.eta_values()[1] - 0.15).abs() < 1e-12);
        assert!((grid.eta_values()[18] - 1.0).abs() < 1e-12);

        assert!(GridSpec::new(vec![], vec![0.5]).is_err());
        assert!(GridSpec::new(vec![0.9], vec![0.5]).is_err());
        assert!(GridSpec::new(vec![1.1], vec![1.5]).is_err());
    }

    #[test]
    fn err_window_perfect_single_expert_is_zero() {
        // CA125 separates every triplet by construction: huge signal.
        let cohort = small_cohort(5, 12, 25.0);
        let window: Vec<Triplet> = cohort
            .triplets()
            .iter()
            .filter(|t| t.time_to_diagnosis() < 10.0)
            .cloned()
            .collect();
        assert!(!window.is_empty());
        let pool = vec![crate::experts::CombinationExpert::ca125_only()];
        let err = err_window(&window, 1.2, 0.65, &pool).unwrap();
        assert!(err.abs() < 1e-12, "err {err}");
    }

    #[test]
    fn err_window_bounds_and_errors() {
        let cohort = small_cohort(6, 15, 0.0);
        let pool = build_pool(4).unwrap();
        let err = err_window(cohort.triplets(), 1.2, 0.65, &pool).unwrap();
        assert!(err >= 0.0 && err <= cohort.len() as f64);
        assert!(err_window(&[], 1.2, 0.65, &pool).is_err());
        assert!(err_window(cohort.triplets(), 1.2, 1.5, &pool).is_err());
    }

    #[test]
    fn engine_matches_public_online_run() {
        // The allocation-free replay must agree with the public pipeline:
        // run_online over expert forecasts, sharpened, half losses summed.
        let cohort = small_cohort(7, 18, 1.0);
        let pool = build_pool(4).unwrap();
        for (d, eta) in [(1.0, 1.0), (1.2, 0.65), (1.7, 0.3)] {
            let fast = err_window(cohort.triplets(), d, eta, &pool).unwrap();
            let ordered = order_window(cohort.triplets());
            let events = pool_events(&ordered, &pool).unwrap();
            let prior = power_law_prior(&pool, d).unwrap();
            let records = run_online(OutcomeSpace::triplet(), &prior, eta, &events, true).unwrap();
            let slow: f64 = records.iter().map(|r| r.learner_loss / 2.0).sum();
            assert!(
                (fast - slow).abs() < 1e-9,
                "d={d} eta={eta}: fast {fast} vs slow {slow}"
            );
        }
    }

    #[test]
    fn fresh_per_triplet_mode_ignores_history() {
        let cohort = small_cohort(8, 10, 0.5);
        let pool = build_pool(3).unwrap();
        let windowed =
            err_window_mode(cohort.triplets(), 1.2, 0.65, &pool, ErrMode::WindowedRun).unwrap();
        let fresh = err_window_mode(
            cohort.triplets(),
            1.2,
            0.65,
            &pool,
            ErrMode::FreshPerTriplet,
        )
        .unwrap();
        // Fresh mode equals the sum of single-triplet windowed runs.
        let sum_single: f64 = cohort
            .triplets()
            .iter()
            .map(|t| err_window(std::slice::from_ref(t), 1.2, 0.65, &pool).unwrap())
            .sum();
        assert!((fresh - sum_single).abs() < 1e-9);
        // Both are valid error totals.
        assert!(windowed >= 0.0 && fresh >= 0.0);
    }

    #[test]
    fn min_err_grid_dominates_members() {
        let cohort = small_cohort(9, 14, 0.8);
        let pool = build_pool(4).unwrap();
        let grid = GridSpec::new(vec![1.1, 1.2, 1.6], vec![0.3, 0.65, 1.0]).unwrap();
        let (e, (d_star, eta_star)) = min_err_grid(cohort.triplets(), &grid, &pool).unwrap();
        for &d in grid.d_values() {
            for &eta in grid.eta_values() {
                let err = err_window(cohort.triplets(), d, eta, &pool).unwrap();
                assert!(e <= err + 1e-12, "min {e} vs cell ({d},{eta}) {err}");
            }
        }
        let at_argmin = err_window(cohort.triplets(), d_star, eta_star, &pool).unwrap();
        assert!((e - at_argmin).abs() < 1e-12);

        // Degenerate single-cell grid equals the plain windowed error.
        let single = GridSpec::single(1.2, 0.65).unwrap();
        let (e_single, argmin) = min_err_grid(cohort.triplets(), &single, &pool).unwrap();
        assert_eq!(argmin, (1.2, 0.65));
        let direct = err_window(cohort.triplets(), 1.2, 0.65, &pool).unwrap();
        assert!((e_single - direct).abs() < 1e-12);
    }

    #[test]
    fn permute_labels_is_uniform_and_preserves_invariants() {
        let cohort = small_cohort(10, 1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let permuted = permute_labels(cohort.triplets(), &mut rng);
            assert_eq!(
                permuted[0].samples().iter().filter(|s| s.is_case()).count(),
                1
            );
            counts[permuted[0].case_position()] += 1;
        }
        // Chi-square, 2 degrees of freedom; 13.8 is the 0.1% quantile.
        let expected = 10_000.0 / 3.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.8, "chi2 {chi2} counts {counts:?}");

        // Fixed seed reproduces the same permutation.
        let mut rng_a = ChaCha8Rng::seed_from_u64(9);
        let mut rng_b = ChaCha8Rng::seed_from_u64(9);
        let a = permute_labels(cohort.triplets(), &mut rng_a);
        let b = permute_labels(cohort.triplets(), &mut rng_b);
        assert_eq!(a, b);
    }

    #[test]
    fn pvalue_floor_and_determinism() {
        // Strong signal: the observed statistic beats essentially every
        // permutation, so p sits at the floor 1/(N+1).
        let cohort = small_cohort(11, 16, 20.0);
        let pool = build_pool(4).unwrap();
        let grid = GridSpec::single(1.2, 0.65).unwrap();
        let window: Vec<Triplet> = cohort
            .triplets()
            .iter()
            .filter(|t| t.time_to_diagnosis() < 8.0)
            .cloned()
            .collect();
        let report = pvalue(&window, &grid, &pool, 200, 77, 0.0).unwrap();
        assert_eq!(report.q, 0);
        assert!((report.p_value - 1.0 / 201.0).abs() < 1e-15);
        assert_eq!(report.window_size, window.len());

        let again = pvalue(&window, &grid, &pool, 200, 77, 0.0).unwrap();
        assert_eq!(report, again);

        assert!(pvalue(&[], &grid, &pool, 10, 1, 0.0).is_err());
        assert!(pvalue(&window, &grid, &pool, 0, 1, 0.0).is_err());
    }

    #[test]
    fn pvalue_near_one_when_observed_labels_are_worst() {
        // A single-expert pool on a null window: around half the
        // permutations do at least as well, often many more.
        let cohort = small_cohort(12, 20, 0.0);
        let pool = vec![crate::experts::CombinationExpert::ca125_only()];
        let grid = GridSpec::single(1.2, 0.65).unwrap();
        let report = pvalue(cohort.triplets(), &grid, &pool, 300, 5, 0.0).unwrap();
        assert!(report.p_value > 0.05, "p {} q {}", report.p_value, report.q);
        assert!(report.p_value <= 1.0);
    }

    #[test]
    fn sweep_rows_match_pvalue_and_mark_empty_windows() {
        let cohort = small_cohort(13, 30, 1.5);
        let pool = build_pool(4).unwrap();
        let config = SweepConfig {
            grid: GridSpec::new(vec![1.1, 1.5], vec![0.4, 0.8]).unwrap(),
            n_trials: 40,
            seed: 21,
            ..SweepConfig::default()
        };
        // Window starts beyond the tau span are empty but still emitted.
        let rows = window_sweep(&cohort, &[0.0, 6.0, 40.0], 6.0, &pool, &config).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].window_size, 0);
        assert_eq!(rows[2].aa_p, None);

        let window = cohort.select_window(0.0, 6.0, false);
        let direct = pvalue(&window, &config.grid, &pool, 40, 21, 0.0).unwrap();
        assert_eq!(rows[0].aa_p, Some(direct.p_value));
        assert_eq!(rows[0].window_size, direct.window_size);

        // Pool has 4 peaks, so peak-2 and peak-3 columns exist; the named
        // combinations too.
        assert!(rows[0].c3_1_e.is_some());
        assert!(rows[0].peak2_p.is_some());
        // Min over the pool dominates every named rule.
        assert!(rows[0].min_e.unwrap() <= rows[0].ca125_e.unwrap());
        assert!(rows[0].min_e.unwrap() <= rows[0].c3_1_e.unwrap());
    }

    #[test]
    fn report_writers_emit_pinned_headers() {
        let dir = std::env::temp_dir().join(format!("brier_aa_stats_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let rows = vec![WindowRow::empty(0.0)];

        let table = dir.join("table.csv");
        write_table_csv(&rows, &table).unwrap();
        let text = std::fs::read_to_string(&table).unwrap();
        assert!(text.starts_with(
            "t,window_size,ca125_e,ca125_p,aa_e,aa_p,min_e,min_p,c3_1_e,c3_2_e,peak3_p,c2_e,peak2_p\n"
        ));
        assert!(text.lines().nth(1).unwrap().contains("NA"));

        let pvals = dir.join("pvalues.csv");
        write_pvalue_csv(&rows, &pvals).unwrap();
        let text = std::fs::read_to_string(&pvals).unwrap();
        assert!(text.starts_with("t,method,log10_p\n"));

        let fractions = dir.join("fractions.csv");
        write_error_fraction_csv(&rows, &fractions).unwrap();
        let text = std::fs::read_to_string(&fractions).unwrap();
        assert!(text.starts_with("t,method,error_fraction\n"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
