//! Stable hashing and seed derivation.
//!
//! Everything seeded in the harness must replay bit-identically across runs and
//! platforms, so we use FNV-1a instead of `std::hash` (whose output is not
//! guaranteed stable between releases).

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive a child seed from a base seed and a sequence of labels.
///
/// Labels are hashed with a separator so `["ab","c"]` and `["a","bc"]` differ.
pub fn seed_for(base: u64, labels: &[&str]) -> u64 {
    let mut h = FNV_OFFSET ^ base;
    for label in labels {
        for &b in label.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix finalizer to spread low-entropy label differences
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
