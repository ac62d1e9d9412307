//! Deterministic synthetic cohort generator.
//!
//! Produces cohorts with the shape of the real study — triplets of one
//! case plus two matched controls, CA125 and peak intensities, times to
//! diagnosis and measurement dates — with an optional planted disease
//! signal that decays linearly to zero at a configurable horizon. With
//! `signal_strength = 0` the case labels are independent of every feature,
//! which is the null configuration used to calibrate p-values.
//!
//! All features are log-normal. The case sample's `ln CA125` is shifted up
//! by `signal_strength * max(0, 1 - tau/horizon)` and the informative
//! peaks' log intensities are shifted down by the same amount, so the
//! combinations `ln C - w ln I_p` with negative `w` separate cases best —
//! mirroring which rule shapes are expected to win.
//!
//! Reproducibility: one ChaCha8 stream seeded from `seed` drives the whole
//! cohort. Per triplet the draw order is fixed: time to diagnosis, date
//! offset, patient-reuse coin, case position, then for each of the three
//! samples `ln CA125` followed by the peaks in index order. Normal deviates
//! come from Box-Muller (two uniform draws each, the sine branch unused)
//! with `libm` transcendentals, so a seed yields the same cohort on every
//! platform.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::cohort::{Cohort, Date, Sample, Triplet};
use crate::error::{Error, Result};
use crate::rngutil::{uniform_usize, unit_f64, unit_f64_open_low};

/// Log-scale mean of control CA125.
const LN_CA125_MEAN: f64 = 3.0;
/// Log-scale mean of every peak intensity.
const LN_PEAK_MEAN: f64 = 4.6;
/// Log-scale standard deviation of all features.
const LN_SIGMA: f64 = 0.5;
/// Probability that a triplet reuses the previous case patient, so the
/// latest-per-patient rule in window selection has something to do.
const PATIENT_REUSE_PROB: f64 = 0.25;
/// Times to diagnosis are spread uniformly over this many months.
const TAU_SPAN_MONTHS: f64 = 24.0;
/// Measurement dates are spread over a 7-year span.
const DATE_SPAN_DAYS: usize = 7 * 365;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_triplets: usize,
    pub n_peaks: u16,
    /// Log-scale mean shift applied to case features at time to
    /// diagnosis 0; decays linearly to 0 at `signal_horizon`.
    pub signal_strength: f64,
    /// Months beyond which the planted signal is zero.
    pub signal_horizon: f64,
    /// 1-based peak indices that carry the signal.
    pub informative_peaks: Vec<u16>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_triplets: 179,
            n_peaks: 67,
            signal_strength: 1.8,
            signal_horizon: 15.0,
            informative_peaks: vec![2, 3, 7],
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_triplets == 0 {
            return Err(Error::config("n_triplets must be at least 1"));
        }
        if self.n_peaks == 0 {
            return Err(Error::config("n_peaks must be at least 1"));
        }
        if !self.signal_strength.is_finite() || self.signal_strength < 0.0 {
            return Err(Error::config(format!(
                "signal_strength must be >= 0, got {}",
                self.signal_strength
            )));
        }
        if !self.signal_horizon.is_finite() || self.signal_horizon <= 0.0 {
            return Err(Error::config(format!(
                "signal_horizon must be > 0, got {}",
                self.signal_horizon
            )));
        }
        for &p in &self.informative_peaks {
            if p == 0 || p > self.n_peaks {
                return Err(Error::config(format!(
                    "informative peak {p} out of range 1..={}",
                    self.n_peaks
                )));
            }
        }
        Ok(())
    }
}

/// One standard normal deviate by Box-Muller; consumes two uniforms.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = unit_f64_open_low(rng);
    let u2 = unit_f64(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
}

/// Generate a cohort from `config`; bit-identical for a fixed seed.
pub fn generate(config: &SynthConfig) -> Result<Cohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let epoch = Date::parse("2000-01-01").expect("valid epoch").to_days();

    let mut informative = vec![false; config.n_peaks as usize];
    for &p in &config.informative_peaks {
        informative[p as usize - 1] = true;
    }

    let mut triplets = Vec::with_capacity(config.n_triplets);
    let mut case_patients = 0usize;
    let mut current_patient = String::new();
    for i in 0..config.n_triplets {
        let tau = TAU_SPAN_MONTHS * unit_f64(&mut rng);
        let date = Date::from_days(epoch + uniform_usize(&mut rng, DATE_SPAN_DAYS) as i64);
        let reuse = unit_f64(&mut rng) < PATIENT_REUSE_PROB && i > 0;
        if !reuse {
            case_patients += 1;
            current_patient = format!("case-{case_patients:04}");
        }
        let case_position = uniform_usize(&mut rng, 3);
        let shift = config.signal_strength * (1.0 - tau / config.signal_horizon).max(0.0);

        let mut samples: Vec<Sample> = Vec::with_capacity(3);
        for position in 0..3 {
            let is_case = position == case_position;
            let ln_ca125 = LN_CA125_MEAN
                + LN_SIGMA * standard_normal(&mut rng)
                + if is_case { shift } else { 0.0 };
            let mut peaks = Vec::with_capacity(config.n_peaks as usize);
            for &informative_peak in &informative {
                let mut ln_intensity = LN_PEAK_MEAN + LN_SIGMA * standard_normal(&mut rng);
                if is_case && informative_peak {
                    ln_intensity -= shift;
                }
                peaks.push(libm::exp(ln_intensity));
            }
            let patient_id = if is_case {
                current_patient.clone()
            } else {
                format!("ctrl-{:04}-{position}", i + 1)
            };
            samples.push(Sample::new(
                patient_id,
                libm::exp(ln_ca125),
                peaks,
                is_case,
            )?);
        }
        triplets.push(Triplet::new(
            format!("t{:04}", i + 1),
            [samples[0].clone(), samples[1].clone(), samples[2].clone()],
            tau,
            date,
        )?);
    }
    Cohort::new(triplets)
}
