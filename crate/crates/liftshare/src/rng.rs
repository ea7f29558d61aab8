//! Deterministic seed-stream helpers.
//!
//! Every randomized routine in this crate draws from a ChaCha stream keyed
//! by a user seed plus a purpose/index counter, so independent units of work
//! (bootstrap resamples, sampled permutations, benchmark replications) can
//! run in any order, or in parallel, without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for stream `index` of the generator keyed by `seed`.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stable sub-seed for unit `index` under a master seed (splitmix64 mix).
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
