//! Deterministic sub-seed derivation.

/// Mixes `path` into `root` with splitmix64 steps; distinct paths give unrelated seeds.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut x = root ^ 0x9E37_79B9_7F4A_7C15;
    for &v in path {
        x = x.wrapping_add(v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^= x >> 31;
        x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 29;
    }
    x
}
