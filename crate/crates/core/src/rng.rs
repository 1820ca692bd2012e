//! Counter-keyed seeding: the stream for item `i` of a batch depends only on
//! `(batch_seed, i)`, never on the order in which items are produced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ForgeRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of item `index` within a batch seeded by `batch_seed`.
pub fn derive_seed(batch_seed: u64, index: u64) -> u64 {
    splitmix64(batch_seed ^ splitmix64(index.wrapping_add(0x6A09_E667_F3BC_C909)))
}

pub fn rng_from_seed(seed: u64) -> ForgeRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit FNV-1a hash, used to key streams by string identifiers.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
