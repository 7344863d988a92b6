//! Seeded random streams.
//!
//! Every random decision in a run comes from a stream whose seed is derived
//! from the run seed and a key `(purpose, epoch, batch, sample)`:
//!
//! ```text
//! h = mix64(run_seed ^ (purpose_tag * 0x9E3779B97F4A7C15))
//! h = mix64(h ^ mix64(epoch  + 0xA0761D6478BD642F))
//! h = mix64(h ^ mix64(batch  + 0xE7037ED1A0B428DB))
//! h = mix64(h ^ mix64(sample + 0x8EBC6AF09C88C6E3))
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer. The stream generator is ChaCha8
//! seeded with `SeedableRng::seed_from_u64(h)`. Uniform reals are formed from
//! the top 53 bits of one `next_u64` as `(k + 0.5) * 2^-53`, which lies
//! strictly inside (0, 1). Because streams are keyed rather than split from
//! a shared generator, the order in which samples are processed (and hence
//! the thread count) has no effect on the numbers drawn.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator behind every derived stream.
pub type StreamRng = ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Init,
    Subset,
    Shuffle,
    Forward,
    Eval,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Init => 1,
            StreamPurpose::Subset => 2,
            StreamPurpose::Shuffle => 3,
            StreamPurpose::Forward => 4,
            StreamPurpose::Eval => 5,
        }
    }
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of the stream keyed by `(purpose, epoch, batch, sample)`.
pub fn derive_seed(run_seed: u64, purpose: StreamPurpose, epoch: u64, batch: u64, sample: u64) -> u64 {
    let mut h = mix64(run_seed ^ purpose.tag().wrapping_mul(0x9E37_79B9_7F4A_7C15));
    h = mix64(h ^ mix64(epoch.wrapping_add(0xA076_1D64_78BD_642F)));
    h = mix64(h ^ mix64(batch.wrapping_add(0xE703_7ED1_A0B4_28DB)));
    mix64(h ^ mix64(sample.wrapping_add(0x8EBC_6AF0_9C88_C6E3)))
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Shorthand for `stream(derive_seed(..))`.
pub fn derived_stream(run_seed: u64, purpose: StreamPurpose, epoch: u64, batch: u64, sample: u64) -> StreamRng {
    stream(derive_seed(run_seed, purpose, epoch, batch, sample))
}

/// One uniform draw strictly inside (0, 1); consumes exactly one `next_u64`.
pub fn uniform_open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((rng.next_u64() >> 11) as f64 + 0.5) * SCALE
}

/// Index in `0..bound` by 64x64 multiply-high; consumes one `next_u64`.
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// In-place Fisher-Yates shuffle driven by [`uniform_index`].
pub fn shuffle<T, R: RngCore + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}
