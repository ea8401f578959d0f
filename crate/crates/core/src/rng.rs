use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based stream: the same `(seed, stream)` pair always yields the
/// same sequence regardless of scheduling order.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
