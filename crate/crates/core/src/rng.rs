//! Seeded randomness for kernel generation.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`). A
//! top-level `u64` seed is expanded with `SeedableRng::seed_from_u64` and each
//! consumer reads its own ChaCha stream, selected by [`Stream`]. Bounded
//! integers use the multiply-shift reduction `(x * n) >> 64` on a full 64-bit
//! draw. Re-running any generator with the same seed therefore reproduces the
//! exact same values, independent of thread scheduling or call order between
//! streams.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Independent ChaCha stream ids, one per consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    EdgeStart = 1,
    EdgeEnd = 2,
    Weight = 3,
    Feature = 4,
    PatternSeed = 5,
    Radix = 6,
    Trace = 7,
    PatternData = 8,
}

#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn next_u32(&mut self) -> u32 {
        (self.0.next_u64() >> 32) as u32
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.0.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

/// Child seed for the `index`-th run spawned from a CLI-level seed.
///
/// One SplitMix64 finalisation round over `seed + (index + 1) * golden`, so
/// children of nearby seeds do not collide.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
