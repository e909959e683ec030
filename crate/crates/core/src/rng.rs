//! Reproducible random streams.
//!
//! Every stochastic routine draws from [`ChaCha8Rng`] seeded through
//! `seed_from_u64`. Independent draws in a sample bank use the seed stream
//! `base_seed + index` (wrapping), so sample `i` is the same no matter how the
//! bank is partitioned across threads.

pub use rand_chacha::ChaCha8Rng as StudyRng;
use rand::SeedableRng;

pub fn rng_from_seed(seed: u64) -> StudyRng {
    StudyRng::seed_from_u64(seed)
}

/// Generator for element `index` of the stream rooted at `base`.
pub fn stream_rng(base: u64, index: u64) -> StudyRng {
    StudyRng::seed_from_u64(base.wrapping_add(index))
}
