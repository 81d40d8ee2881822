//! The single random number generator used across the crate.
//!
//! ChaCha20 is a counter-based stream cipher: a `(seed, stream)` pair selects
//! an independent keystream, so every optimization step, MC batch or worker
//! row draws from its own substream and runs replay bit-for-bit regardless of
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Generator for substream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a stream id with a salt so that unrelated consumers sharing a seed
/// (training batches, evaluation batches, weight init) never collide.
pub fn salted(stream: u64, salt: u64) -> u64 {
    let mut z = stream ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
