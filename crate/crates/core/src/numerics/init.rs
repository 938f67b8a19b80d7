use rand::Rng as _;
use rand::SeedableRng;

use super::Tensor;

/// The RNG used for every stochastic choice in the crate (initialization,
/// shuffling, synthetic data). Seeded explicitly so runs reproduce exactly.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Weight initialization: uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
pub fn uniform_fan_in(rng: &mut Rng, fan_in: usize, shape: &[usize]) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.values_mut() {
        *v = rng.random_range(-bound..bound);
    }
    t
}
