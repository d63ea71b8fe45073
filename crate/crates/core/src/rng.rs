//! Seeded randomness shared by every stochastic component.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

/// The engine's RNG. ChaCha8 gives identical streams on every platform.
pub type EngineRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for a derived stream, e.g. `(config seed, epoch)`.
pub fn stream_rng(seed: u64, stream: u64) -> EngineRng {
    ChaCha8Rng::seed_from_u64(math::mix_seed(seed, stream))
}

/// Standard normal sample via Box-Muller.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // u1 in (0, 1] keeps the log finite.
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
}

/// Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
