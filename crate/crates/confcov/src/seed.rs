//! Counter-based seed derivation.
//!
//! Every source of randomness in this crate flows from a single `u64` seed
//! through [`derive`], which mixes the base seed with a list of stream tags
//! (subsample index, cell index, replication index, ...). The result depends
//! only on the values mixed in, never on execution order, so parallel workers
//! can derive their own streams and results stay reproducible across thread
//! counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TAG_SALT: u64 = 0xA076_1D64_78BD_642F;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of stream tags into a new seed.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &tag in tags {
        h = splitmix64(h.rotate_left(17) ^ splitmix64(tag ^ TAG_SALT));
    }
    h
}

/// A deterministic RNG for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
