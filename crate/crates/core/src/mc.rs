//! Chunked Monte-Carlo driver.
//!
//! `num_samples` is cut into fixed-size chunks; chunk `i` draws from
//! `rng::stream(seed, i)`. Chunks run on the rayon pool and their partial
//! results come back in chunk order, so a seed fixes the output bit-for-bit
//! regardless of how many worker threads execute it.

use rayon::prelude::*;

use crate::rng::{self, StreamRng};

pub const CHUNK_SIZE: u64 = 1 << 14;

/// Runs `work(rng, n)` for each chunk and returns the partial results in
/// chunk order.
pub fn run_chunks<T, F>(num_samples: u64, seed: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, u64) -> T + Sync,
{
    let chunks = num_samples.div_ceil(CHUNK_SIZE);
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let n = CHUNK_SIZE.min(num_samples - i * CHUNK_SIZE);
            let mut rng = rng::stream(seed, i);
            work(&mut rng, n)
        })
        .collect()
}
