//! Counter-based substream derivation.
//!
//! Every population, type, patient, and bootstrap replicate gets its own
//! generator derived from (base seed, tags), so generation is reproducible
//! under any scheduling or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_STRATA: u64 = 1;
pub(crate) const STREAM_TYPE: u64 = 2;
pub(crate) const STREAM_PATIENT: u64 = 3;
pub(crate) const STREAM_BOOTSTRAP: u64 = 4;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    splitmix64(&mut state);
    for &tag in tags {
        state ^= tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
