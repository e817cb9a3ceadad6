//! Deterministic random streams.
//!
//! Each task derives its own seed from the master seed and a short tag path,
//! e.g. `(master, IMPUTE, arm, m)` or `(master, BOOTSTRAP, m, b)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const IMPUTE: u64 = 0x494d_5055_5445;
pub const BOOTSTRAP: u64 = 0x424f_4f54;
pub const SIMULATE: u64 = 0x5349_4d55;
pub const MISSINGNESS: u64 = 0x4d49_5353;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a tag path into the master seed. Distinct paths give unrelated seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &tag in path {
        h = splitmix64(h ^ splitmix64(tag.wrapping_add(0x2545_f491_4f6c_dd1d)));
    }
    h
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_depend_on_every_tag() {
        let a = derive_seed(7, &[IMPUTE, 0, 1]);
        assert_eq!(a, derive_seed(7, &[IMPUTE, 0, 1]));
        assert_ne!(a, derive_seed(7, &[IMPUTE, 1, 1]));
        assert_ne!(a, derive_seed(7, &[IMPUTE, 0, 2]));
        assert_ne!(a, derive_seed(8, &[IMPUTE, 0, 1]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }
}
