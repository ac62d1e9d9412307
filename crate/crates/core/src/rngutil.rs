//! Seed derivation and small sampling helpers shared by the synthetic
//! generator and the Monte-Carlo machinery.
//!
//! All randomness in this crate flows through ChaCha8 (RFC 7539 ChaCha with
//! 8 rounds, as implemented by `rand_chacha`), seeded through
//! `seed_from_u64`. Independent streams for Monte-Carlo trials come from
//! ChaCha's 64-bit stream counter, so trial `j` of a run seeded with `s`
//! reads stream `j` of the generator seeded with `s` — a counter-based
//! construction that makes trials order- and thread-independent.

use rand_core::RngCore;

/// SplitMix64 finalizer, the mixing core of the test generator below.
#[cfg(test)]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform f64 in [0, 1), from the top 53 bits of one `next_u64` draw.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform f64 in (0, 1]; safe as a logarithm argument.
pub(crate) fn unit_f64_open_low(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` by rejection sampling (no modulo bias).
pub(crate) fn uniform_usize(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    let n = n as u64;
    let zone = (u64::MAX / n) * n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Minimal SplitMix64 generator for unit tests that need quick, seedable
/// randomness without pulling the full ChaCha state around.
#[cfg(test)]
pub(crate) struct SplitMix64 {
    state: u64,
}

#[cfg(test)]
impl SplitMix64 {
    pub(crate) fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        splitmix64(self.state)
    }

    pub(crate) fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
