//! The log-linear combination experts and their power-law prior.
//!
//! An expert is a decision rule `u = v*ln(C) + w*ln(I_p)` over a sample's
//! CA125 level `C` and one peak intensity `I_p`, with `v` in `{0, 1}` and
//! `w` in `{-2, -1, -1/2, 1/2, 1, 2}` (plus the single CA125-only rule
//! `v = 1, w = 0`). Given a triplet, an expert scores the three samples and
//! predicts by the maximum rule: uniform weight over the top-scoring
//! positions.
//!
//! Weights are stored doubled (`-4..4`) so pool identity stays exact and
//! hashable; scores are computed in floating point.

use std::fmt;

use crate::cohort::Triplet;
use crate::error::{Error, Result};
use crate::game::{argmax_uniform, Distribution};

/// One combination rule. `doubled_w` is twice the peak coefficient, so the
/// legal values are `{-4, -2, -1, 0, 1, 2, 4}`; `peak` is 1-based and
/// meaningless when `doubled_w == 0` (the CA125-only rule).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CombinationExpert {
    v: u8,
    doubled_w: i8,
    peak: u16,
}

/// Doubled peak coefficients of the six non-zero rules, ascending.
const DOUBLED_W_NONZERO: [i8; 6] = [-4, -2, -1, 1, 2, 4];

impl CombinationExpert {
    pub fn new(v: u8, doubled_w: i8, peak: u16) -> Result<Self> {
        if v > 1 {
            return Err(Error::config(format!("v must be 0 or 1, got {v}")));
        }
        if doubled_w != 0 && !DOUBLED_W_NONZERO.contains(&doubled_w) {
            return Err(Error::config(format!(
                "doubled peak coefficient must be one of -4,-2,-1,0,1,2,4, got {doubled_w}"
            )));
        }
        if v == 0 && doubled_w == 0 {
            return Err(Error::config("the all-zero rule (v=0, w=0) is excluded"));
        }
        if doubled_w != 0 && peak == 0 {
            return Err(Error::config("peak index is 1-based; got 0"));
        }
        Ok(CombinationExpert { v, doubled_w, peak })
    }

    /// The unique CA125-only rule (`v = 1, w = 0`).
    pub fn ca125_only() -> Self {
        CombinationExpert {
            v: 1,
            doubled_w: 0,
            peak: 0,
        }
    }

    pub fn v(&self) -> u8 {
        self.v
    }

    /// The peak coefficient `w` as a float.
    pub fn w(&self) -> f64 {
        self.doubled_w as f64 / 2.0
    }

    pub fn doubled_w(&self) -> i8 {
        self.doubled_w
    }

    /// 1-based peak index; `None` for the CA125-only rule.
    pub fn peak(&self) -> Option<u16> {
        if self.doubled_w == 0 {
            None
        } else {
            Some(self.peak)
        }
    }

    pub fn uses_ca125(&self) -> bool {
        self.v == 1
    }
}

impl fmt::Display for CombinationExpert {
    /// Names follow the rule shape: `lnC`, `lnC-0.5lnI3`, `-lnI12`, ...
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn coeff(doubled: i8) -> String {
            match doubled.abs() {
                1 => "0.5".to_string(),
                2 => String::new(),
                4 => "2".to_string(),
                other => format!("{}", other as f64 / 2.0),
            }
        }
        match (self.v, self.doubled_w) {
            (1, 0) => write!(f, "lnC"),
            (1, w) if w > 0 => write!(f, "lnC+{}lnI{}", coeff(w), self.peak),
            (1, w) => write!(f, "lnC-{}lnI{}", coeff(w), self.peak),
            (_, w) if w > 0 => write!(f, "{}lnI{}", coeff(w), self.peak),
            (_, w) => write!(f, "-{}lnI{}", coeff(w), self.peak),
        }
    }
}

/// Build the full pool for `num_peaks` peaks in a fixed, deterministic
/// order: for each peak, the six `v=1, w!=0` rules then the two `v=0`
/// rules (`w` ascending within each group); the CA125-only rule last.
/// Size is `8 * num_peaks + 1` — 537 for the 67-peak configuration.
///
/// For `v = 0` the ranking induced by `w*ln(I_p)` depends only on the sign
/// of `w`, so one representative per sign is kept (`w = -1` and `w = 1`);
/// that is what makes the count 2 per peak rather than 6.
pub fn build_pool(num_peaks: u16) -> Result<Vec<CombinationExpert>> {
    if num_peaks == 0 {
        return Err(Error::config("pool needs at least one peak"));
    }
    let mut pool = Vec::with_capacity(8 * num_peaks as usize + 1);
    for peak in 1..=num_peaks {
        for &dw in &DOUBLED_W_NONZERO {
            pool.push(CombinationExpert {
                v: 1,
                doubled_w: dw,
                peak,
            });
        }
        for &dw in &[-2i8, 2] {
            pool.push(CombinationExpert {
                v: 0,
                doubled_w: dw,
                peak,
            });
        }
    }
    pool.push(CombinationExpert::ca125_only());
    Ok(pool)
}

/// The rule's score `v*ln(ca125) + w*ln(peak_intensity)` for one sample.
///
/// A strictly positive value is required wherever a logarithm is taken;
/// zero intensities are expected to have been floored away upstream
/// (see [`crate::cohort::Cohort::floor_zero_peaks`]).
pub fn expert_score(expert: &CombinationExpert, ca125: f64, peak_intensity: f64) -> Result<f64> {
    let mut score = 0.0;
    if expert.v == 1 {
        if !ca125.is_finite() || ca125 <= 0.0 {
            return Err(Error::data(format!(
                "CA125 must be positive to take its log, got {ca125}"
            )));
        }
        score += ca125.ln();
    }
    if expert.doubled_w != 0 {
        if !peak_intensity.is_finite() || peak_intensity <= 0.0 {
            return Err(Error::data(format!(
                "intensity of peak {} must be positive to take its log, got {peak_intensity}",
                expert.peak
            )));
        }
        score += expert.w() * peak_intensity.ln();
    }
    Ok(score)
}

/// Score the three samples of a triplet and convert to a prediction by the
/// maximum rule.
pub fn expert_predict(expert: &CombinationExpert, triplet: &Triplet) -> Result<Distribution> {
    let mut scores = [0.0f64; 3];
    for (i, sample) in triplet.samples().iter().enumerate() {
        let intensity = match expert.peak() {
            Some(p) => sample.peak(p).ok_or_else(|| {
                Error::data(format!(
                    "triplet {}: sample {} has no peak {}",
                    triplet.id(),
                    i + 1,
                    p
                ))
            })?,
            None => 1.0, // unused by the score
        };
        scores[i] = expert_score(expert, sample.ca125(), intensity)
            .map_err(|e| Error::data(format!("triplet {}, sample {}: {e}", triplet.id(), i + 1)))?;
    }
    argmax_uniform(&scores)
}

/// Power-law prior over a pool: a rule using peak `p` gets raw weight
/// `d^-(p-1)`, so peak 1 sits at weight 1 and later (rarer) peaks decay
/// geometrically; all rules sharing a peak share a weight. The CA125-only
/// rule is assigned the top tier (weight 1). Returned unnormalized — the
/// aggregator normalizes priors on construction.
pub fn power_law_prior(pool: &[CombinationExpert], d: f64) -> Result<Vec<f64>> {
    if !d.is_finite() || d < 1.0 {
        return Err(Error::config(format!(
            "power-law coefficient must be >= 1, got {d}"
        )));
    }
    Ok(pool
        .iter()
        .map(|expert| match expert.peak() {
            Some(p) => d.powi(-(p as i32 - 1)),
            None => 1.0,
        })
        .collect())
}
