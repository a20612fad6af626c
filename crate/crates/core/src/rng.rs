//! Seed handling.
//!
//! Every simulation draws from its own generator keyed by `(root, stream, index)`.
//! The key is hashed with SplitMix64 finalizers, so substreams are a pure function
//! of the key and never depend on how work is split across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator used by all samplers.
pub type SimRng = Xoshiro256PlusPlus;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the 64-bit key of substream `(stream, index)` under `root`.
pub fn substream_key(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ stream) ^ index)
}

/// Generator for substream `(stream, index)` under `root`.
pub fn substream(root: u64, stream: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(substream_key(root, stream, index))
}

/// Generator for a single seeded call.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
