use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams drawn from one run seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Purpose {
    Sample = 1,
    Orderings = 2,
    EvalSubset = 3,
}

/// Stream `(iteration, purpose)` of the ChaCha generator keyed by `seed`.
pub(crate) fn rng_for(seed: u64, iteration: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 8) | purpose as u64);
    rng
}
