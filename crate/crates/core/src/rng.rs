//! Named random sub-streams derived from one root seed, so that changing how
//! many draws one concern makes never shifts another concern's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Generator for `label` (and an optional per-entity `index`) under `root`.
pub fn stream(root: u64, label: &str, index: u64) -> SimRng {
    let seed = splitmix64(splitmix64(root ^ fnv1a(label)).wrapping_add(index));
    ChaCha8Rng::seed_from_u64(seed)
}
