//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed mixed with a stream label, so results never depend
//! on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_DOC: u64 = 0x646f_6373;
pub(crate) const STREAM_SPLIT: u64 = 0x7370_6c74;
pub(crate) const STREAM_SHUFFLE: u64 = 0x7368_7566;
pub(crate) const STREAM_INIT: u64 = 0x696e_6974;
pub(crate) const STREAM_AUG: u64 = 0x6175_676d;
pub(crate) const STREAM_FLIP: u64 = 0x666c_6970;
pub(crate) const STREAM_SUBSAMPLE: u64 = 0x7362_736d;
pub(crate) const STREAM_HOLDOUT: u64 = 0x686f_6c64;
pub(crate) const STREAM_CORPUS: u64 = 0x636f_7270;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a base seed with a stream label and an index.
pub(crate) fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index.wrapping_mul(0xd134_2543_de82_ef95))
}

pub(crate) fn stream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}
