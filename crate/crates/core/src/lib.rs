//! Sequential prediction with expert advice for the Brier game.
//!
//! This crate implements the Strong Aggregating Algorithm for probability
//! forecasting over a finite outcome set, together with a forecasting
//! harness for matched case/control triplets: a pool of log-linear
//! biomarker combination rules, categorical (maximum-rule) prediction,
//! chronological windowing, grid search over the aggregator's parameters,
//! and Monte-Carlo permutation p-values.
//!
//! Module map:
//!
//! - [`game`] — outcome spaces, probability distributions, Brier loss.
//! - [`aggregation`] — the aggregating algorithm: generalized predictions,
//!   the substitution solve, weight updates and online runs.
//! - [`experts`] — the `v*ln(C) + w*ln(I_p)` combination rules and their
//!   power-law prior.
//! - [`cohort`] — triplet data model, CSV ingestion, chronological order
//!   and time-window selection.
//! - [`stats`] — windowed error statistics, grid search and permutation
//!   p-values.
//! - [`synth`] — deterministic synthetic cohort generator with a
//!   plantable, time-decaying signal.
//!
//! All Monte-Carlo machinery is seeded ChaCha8 with explicit stream
//! derivation, so every result is reproducible bit-for-bit from its seed
//! and independent of thread count.

pub mod aggregation;
pub mod cohort;
mod date;
pub mod error;
pub mod experts;
pub mod game;
mod rngutil;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
