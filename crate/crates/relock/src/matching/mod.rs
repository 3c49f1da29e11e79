//! Descriptor matching: Hamming distance, grid-radius lookup, the batched
//! projection-search kernel, and the inverted-index candidate detector.
//!
//! `projection_search` and `features_in_radius` are pure functions of
//! their inputs and internally data-parallel; `detect_candidates` and word
//! assignment are single-threaded by contract.

pub mod projection;
pub mod radius;
pub mod words;

pub use projection::{projection_search, MatchResult, PointView, ProjectionSearchParams};
pub use radius::features_in_radius;
pub use words::{detect_candidates, WordIndex, WordProjection};

use crate::map::Descriptor;

/// Hamming distance between two 256-bit descriptors.
pub fn hamming(a: &Descriptor, b: &Descriptor) -> u32 {
    let mut dist = 0u32;
    for i in 0..4 {
        let wa = u64::from_le_bytes(a.0[i * 8..(i + 1) * 8].try_into().unwrap());
        let wb = u64::from_le_bytes(b.0[i * 8..(i + 1) * 8].try_into().unwrap());
        dist += (wa ^ wb).count_ones();
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn bit_loop_hamming(a: &Descriptor, b: &Descriptor) -> u32 {
        (0..256).filter(|&i| a.bit(i) != b.bit(i)).count() as u32
    }

    #[test]
    fn distance_to_self_is_zero() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let d = Descriptor(rng.gen());
        assert_eq!(hamming(&d, &d), 0);
    }

    #[test]
    fn distance_to_complement_is_full_width() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let d = Descriptor(rng.gen());
        assert_eq!(hamming(&d, &d.not()), 256);
    }

    #[test]
    fn matches_bit_loop_oracle() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let a = Descriptor(rng.gen());
            let b = Descriptor(rng.gen());
            assert_eq!(hamming(&a, &b), bit_loop_hamming(&a, &b));
        }
    }
}
