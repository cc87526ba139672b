//! Deterministic seed derivation.
//!
//! Every random quantity in a run is drawn from its own ChaCha8 stream whose
//! seed is a SplitMix64 mix of the parent seed and a stream index. The mix is
//! a pure function, so a replication's draws do not depend on which thread
//! ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of a replication seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 0x10,
    Outcomes = 0x20,
    SampleA = 0x30,
    SampleB = 0x40,
    Folds = 0x50,
    Active = 0x60,
    Learner = 0x70,
    Probe = 0x80,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of `(seed, index)`; used for per-replication seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_mul(GOLDEN).wrapping_add(1)))
}

pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream as u64))
}

/// Sub-stream further indexed, e.g. one learner stream per fold.
pub fn indexed_stream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, stream as u64), index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: changing the mix would silently change every run.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(0, 1));
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = stream(7, Stream::Outcomes).random();
        let _ = stream(7, Stream::SampleA).random::<u64>();
        let b: u64 = stream(7, Stream::Outcomes).random();
        assert_eq!(a, b);
        let c: u64 = stream(7, Stream::SampleB).random();
        assert_ne!(a, c);
    }
}
