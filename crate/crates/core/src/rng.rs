//! Reproducible RNG streams.
//!
//! Every stochastic routine takes an explicit `&mut impl Rng`. Parallel or
//! repeated runs derive one independent stream per run index from a single
//! master seed, so serial and fanned-out execution produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout: counter-based, cheap to seek, splittable by stream.
pub type Stream = ChaCha8Rng;

/// Derive the stream for run `index` under `master_seed`. Streams with
/// different indices never overlap.
pub fn stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
