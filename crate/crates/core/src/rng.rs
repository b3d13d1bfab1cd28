//! Seed derivation and counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a
//! 64-bit seed and addressed by a stream id, so a run can be replayed or
//! resumed at any iteration without replaying the draws before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the optimizer. Each iteration gets its own stream
/// `iter * STREAMS_PER_ITER + purpose`.
pub(crate) const STREAMS_PER_ITER: u64 = 8;
pub(crate) const STREAM_PERTURBATION: u64 = 0;
pub(crate) const STREAM_PROBE: u64 = 1;

/// Returns the RNG for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The stream reserved for `purpose` at optimizer iteration `iter`.
pub fn iteration_stream(seed: u64, iter: usize, purpose: u64) -> ChaCha8Rng {
    stream(seed, iter as u64 * STREAMS_PER_ITER + purpose)
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
