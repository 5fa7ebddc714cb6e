//! Seeded substreams: stream `k` of `seed` is reproducible regardless of
//! which thread draws it or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normals(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}
