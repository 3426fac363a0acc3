//! Counter-based seed derivation so that every stochastic component draws
//! from its own deterministic stream.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed from a base seed and two stream indices.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(base ^ mix(stream)).wrapping_add(index))
}
