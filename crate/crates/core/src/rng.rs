//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator. A
//! `(seed, stream)` pair selects the generator: the seed is expanded into the
//! 256-bit key and the stream index selects one of 2^64 independent ChaCha
//! streams under that key, so splitting is O(1) and streams never overlap.
//! Compound seeds (for example a sweep cell) are folded into one `u64` with
//! [`mix_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a list of integers into one seed. Order-sensitive.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
