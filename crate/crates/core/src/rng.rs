//! Deterministic seed derivation.
//!
//! Every random stream in the workspace is a ChaCha12 generator keyed by a
//! seed mixed from one base seed plus a list of structural tags (writer
//! index, phase index, section index, …). Streams are therefore independent
//! of evaluation order and safe to draw from in parallel.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha12Rng;

/// splitmix64 step; good avalanche behaviour for cheap seed mixing.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mix a base seed with structural tags into one derived seed.
pub fn mix_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag));
    }
    state
}

/// A ChaCha12 stream keyed by `mix_seed(base, tags)`.
pub fn stream(base: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix_seed(base, tags))
}
