//! Seeded generators. Every random object in the crate is drawn from a
//! ChaCha stream addressed by `(seed, stream)`, so realizations are
//! reproducible across platforms and independent of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids reserved for truth generation (operators use `0..q`).
pub(crate) const TRUTH_STREAM: u64 = 1 << 62;
