//! Counter-based random streams.
//!
//! A generator is addressed by `(master_seed, stream, block)`. The key is
//! derived from the seed and stream, the ChaCha stream id is the block, so a
//! block can be regenerated independently of every other block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of draws served by one block.
pub const BLOCK_LEN: usize = 4096;

pub mod streams {
    pub const DESIGN: u64 = 1;
    pub const SIGNAL: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const STATDIM: u64 = 5;
    pub const SOLVER_INIT: u64 = 6;
    /// Monte Carlo components of the expectation engine use `ENGINE + component index`.
    pub const ENGINE: u64 = 1 << 32;
}

pub fn block_rng(master_seed: u64, stream: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(master_seed ^ stream.rotate_left(17)).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(block);
    rng
}

/// Seed for an indexed child (a replicate, a grid cell) of a master seed.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Block ranges covering `0..n`.
pub fn blocks(n: usize) -> impl Iterator<Item = (u64, std::ops::Range<usize>)> {
    (0..n.div_ceil(BLOCK_LEN)).map(move |b| {
        let start = b * BLOCK_LEN;
        (b as u64, start..(start + BLOCK_LEN).min(n))
    })
}
