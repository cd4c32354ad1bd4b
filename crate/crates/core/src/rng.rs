//! Seeded random number generation shared by every sampling step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere in the pipeline. Recorded in report headers.
pub type PipelineRng = ChaCha8Rng;

/// Name written to report metadata so runs can be replayed.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), seeds derived with SplitMix64";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` for the given stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream.wrapping_add(0xA5A5_A5A5)))
}

/// Derives a child seed from a textual purpose tag, e.g. `"split"` or `"balance-test"`.
pub fn derive_seed_tagged(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag keeps this stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    derive_seed(seed, h)
}

pub fn rng_from_seed(seed: u64) -> PipelineRng {
    PipelineRng::seed_from_u64(seed)
}
