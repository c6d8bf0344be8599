//! Named sub-seeds derived from one master seed.
//!
//! Every random stream in the pipeline (weight init, dropout, shuffling,
//! fold dealing, negative sampling) gets its own generator seeded by
//! `derive_seed(master, name, index)`, so adding draws to one stream never
//! perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive_seed(master: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(name)).wrapping_add(index))
}

pub fn rng_for(master: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, name, index))
}
