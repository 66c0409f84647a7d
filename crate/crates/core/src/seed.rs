use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` under `seed`. Streams never overlap,
/// so work split across streams is reproducible regardless of scheduling.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
