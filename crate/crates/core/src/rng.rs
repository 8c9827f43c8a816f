//! Deterministic per-trial random streams.
//!
//! Every trial owns one [`RngStream`] derived from `(master_seed, trial_index)`.
//! The pair is mixed through the splitmix64 finalizer before seeding a
//! ChaCha8 generator, so neighbouring indices give unrelated streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single-owner random stream for one trial.
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn from_seed_u64(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Returns the stream for trial `trial_index` under `master_seed`.
pub fn derive_trial_rng(master_seed: u64, trial_index: u64) -> RngStream {
    let offset = GOLDEN_GAMMA.wrapping_mul(trial_index.wrapping_add(1));
    let seed = mix64(mix64(master_seed) ^ offset);
    RngStream::from_seed_u64(mix64(seed.wrapping_add(GOLDEN_GAMMA)))
}

/// Derives a child master seed, used to give independent sub-experiments
/// (splits, repetitions, grid points) their own seed namespace.
pub fn child_seed(master_seed: u64, tag: u64) -> u64 {
    mix64(master_seed ^ mix64(tag.wrapping_mul(GOLDEN_GAMMA).wrapping_add(0x632B_E59B_D9B4_E019)))
}
