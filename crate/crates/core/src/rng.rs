//! Keyed deterministic RNG streams.
//!
//! Every source of randomness in the pipeline (weight init, shuffles, dropout
//! masks, synthetic jitter, noise injection) derives its stream from a single
//! seed plus a key path, so parallel and serial execution produce identical
//! results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby keys.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse a key path into a single stream seed.
pub fn stream_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x51_7c_c1_b7_27_22_0a_95u64;
    for &p in parts {
        acc = mix(acc ^ p);
    }
    acc
}

/// RNG for the stream identified by `parts`.
pub fn keyed_rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(parts))
}
