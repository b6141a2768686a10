pub mod bench;
pub mod geometry;
pub mod manifold;
pub mod nn;
pub mod registration;
pub mod observe;
pub mod pose;

/// Per-task rng: one seed, independent ChaCha streams.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
