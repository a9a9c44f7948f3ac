//! Seeded, stream-splittable generators.
//!
//! Each estimator takes a 64-bit seed and partitions its samples into fixed
//! blocks; block `i` draws from ChaCha stream `i` of that seed. The block
//! layout depends only on the sample count, never on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples per stream block.
pub const BLOCK_SIZE: u64 = 1 << 14;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(stream index, samples in block)` for every block of `n_samples`.
pub fn blocks(n_samples: u64) -> impl Iterator<Item = (u64, u64)> {
    let full = n_samples / BLOCK_SIZE;
    let rest = n_samples % BLOCK_SIZE;
    (0..full)
        .map(|i| (i, BLOCK_SIZE))
        .chain((rest > 0).then_some((full, rest)))
}
