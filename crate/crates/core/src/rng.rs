//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every unit of parallel work (a training row, a tree, an imputation)
//! gets its own ChaCha stream keyed by the experiment seed plus a path of
//! integer labels, so results never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of labels into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Independent generator for the stream identified by `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stream tags used across the crate; kept in one place so that no two
/// subsystems accidentally share a stream.
pub mod tag {
    pub const PRIOR: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const TREE: u64 = 3;
    pub const IMPUTE: u64 = 4;
    pub const REFERENCE: u64 = 5;
    pub const TUNE: u64 = 6;
    pub const WINDOW: u64 = 7;
    pub const OBSERVED: u64 = 8;
    pub const SELFTEST: u64 = 9;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[1, 2]).random();
        let c: u64 = stream(7, &[2, 1]).random();
        let d: u64 = stream(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
