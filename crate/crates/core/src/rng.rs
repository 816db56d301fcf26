//! Seeded random sub-streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! single root seed and a stream name, so replaying one component never
//! perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// 64-bit FNV-1a over the stream name.
fn stream_id(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Generator for the named sub-stream of `root`.
pub fn substream(root: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream_id(name));
    rng
}

/// Generator for an indexed child of a named sub-stream (rounds, episodes).
pub fn indexed(root: u64, name: &str, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root ^ splitmix(index));
    rng.set_stream(stream_id(name));
    rng
}

/// A child seed for components configured by plain integer seeds.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    use rand::RngCore;
    substream(root, name).next_u64()
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
