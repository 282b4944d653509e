//! Counter-based child seeds for replications.
//!
//! `child_seed(root, s, c, r)` folds the four 64-bit words through SplitMix64:
//!
//! ```text
//! h0 = mix(root)
//! h1 = mix(h0 ^ s)
//! h2 = mix(h1 ^ c)
//! seed = mix(h2 ^ r)
//! ```
//!
//! where `mix` is the SplitMix64 output function applied to `x + 0x9E3779B97F4A7C15`
//! (all arithmetic wrapping). Each replication then seeds a `ChaCha8Rng` with
//! `seed_from_u64(seed)`.

pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_seed(root: u64, scenario: u64, config: u64, replication: u64) -> u64 {
    mix(mix(mix(mix(root) ^ scenario) ^ config) ^ replication)
}
