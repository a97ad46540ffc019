//! Seeding and reduction helpers for reproducible parallel experiments.
//!
//! Every stochastic routine takes a 64-bit master seed and derives one
//! counter-based stream per logical task via [`substream`]. Streams are
//! independent of scheduling, so results are bit-identical regardless of
//! worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for task `(lane, idx)` under `master`.
///
/// `lane` indexes the coarse unit (table setting, sweep size) and `idx` the
/// fine unit (replication, trial seed offset). Both must fit in 32 bits so
/// the pair packs into the generator's stream counter without overlap.
pub fn substream(master: u64, lane: u64, idx: u64) -> ChaCha8Rng {
    debug_assert!(lane < (1 << 32) && idx < (1 << 32));
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((lane << 32) | idx);
    rng
}

/// Sum with a fixed-order pairwise tree; the result depends only on the
/// order of `xs`, never on chunking or thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Mean and standard error of the mean (ddof = 1), via pairwise reduction.
///
/// Returns `(mean, se)`; `se` is 0 for fewer than two samples.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let r = xs.len();
    if r == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = pairwise_sum(xs) / r as f64;
    if r < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (r as f64 - 1.0);
    (mean, (var / r as f64).sqrt())
}
