//! Seeded random streams.
//!
//! Every random decision derives from one top-level seed through named
//! sub-streams (`"simulate"`, `"split"`, `"train"`, ...) so a stage can be
//! rerun on its own without perturbing the others. The generator is
//! ChaCha8, whose output is identical on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name recorded in manifests and run summaries.
pub const PRNG_NAME: &str = "chacha8 (rand_chacha 0.9), splitmix64 sub-stream derivation";

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives a sub-stream seed from a parent seed, a stream name and an index path.
pub fn derive_seed(seed: u64, name: &str, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ fnv1a(name.as_bytes()));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn stream(seed: u64, name: &str, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, path))
}

/// Stable 64-bit key for a string id, used to order samples independently
/// of their position in the input.
pub fn keyed_hash(seed: u64, name: &str, id: &str) -> u64 {
    splitmix64(derive_seed(seed, name, &[]) ^ fnv1a(id.as_bytes()))
}

/// Standard normal deviate by Box-Muller, using `libm` so the value does not
/// depend on the platform math library.
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // u1 in (0, 1] keeps ln finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
}

/// Fisher-Yates shuffle driven by the given stream.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
