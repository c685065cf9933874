//! Seed derivation for reproducible, scheduling-independent random streams.
//!
//! Every particle slot owns its own generator, seeded from the run seed and the
//! slot index. Replicates derive their run seed from the master seed and the
//! replicate index. Results therefore do not depend on how work is split
//! across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator used for every particle stream and replicate.
pub type StreamRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a path of indices.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(parent.wrapping_add(GOLDEN)), |acc, &i| {
        mix64(acc ^ mix64(i.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)))
    })
}

pub fn stream(parent: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(parent, path))
}

/// Seed for replicate `r` of an experiment run with `master`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, &[0x5245_504c, r as u64])
}

/// Stream owned by particle slot `slot` within a run.
pub(crate) fn particle_stream(run_seed: u64, slot: usize) -> StreamRng {
    stream(run_seed, &[0x5041_5254, slot as u64])
}

/// Stream used for ensemble-wide operations (resampling) within a run.
pub(crate) fn control_stream(run_seed: u64) -> StreamRng {
    stream(run_seed, &[0x4354_524c])
}
