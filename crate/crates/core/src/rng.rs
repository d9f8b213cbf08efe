//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), seeded
//! through `SeedableRng::seed_from_u64` and split into independent streams
//! with the ChaCha stream counter. Gaussian variates use the ziggurat sampler
//! behind `rand_distr::StandardNormal`. Both are pinned by `Cargo.lock`, so
//! runs reproduce exactly across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream carrying the optimizer's own sampling (CMA-ES and the prior baseline).
pub const SAMPLING_STREAM: u64 = 0;

/// Returns the generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-candidate stream used by benchmark noise and failure injection. Offset
/// so it never aliases [`SAMPLING_STREAM`].
pub fn candidate_stream(seed: u64, candidate_id: u64) -> ChaCha8Rng {
    stream(seed, candidate_id.wrapping_add(1))
}
