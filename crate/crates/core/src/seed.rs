//! Seed derivation for independent, order-free random streams.

/// SplitMix64 finalizer applied to `a` combined with `b`.
///
/// Every trial, grid point and suite derives its generator from
/// `mix_seed(parent, index)`, so results never depend on which thread ran
/// which index.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
