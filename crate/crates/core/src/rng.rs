//! Seeded random streams. Every stochastic step draws from its own ChaCha
//! stream derived from one master seed, so adding draws in one place never
//! perturbs another.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Init = 2,
    Minibatch = 3,
    MonteCarlo = 4,
    Lengthscale = 5,
    Synthetic = 6,
    Verify = 7,
    Predict = 8,
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}

pub fn standard_normals<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}
