//! Seed-derivation helpers. Derived seeds are stable across platforms and
//! worker counts so that any parallel decomposition reproduces bit-for-bit.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent child seed for stream `stream` of a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    mix(base ^ mix(stream))
}

/// FNV-1a over a string, folded with a numeric discriminant. Used to give
/// each (user, index) work item its own deterministic RNG stream.
pub fn stable_hash(text: &str, n: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    mix(h ^ n)
}
