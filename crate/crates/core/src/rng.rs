//! Seeding. Every independent unit of work gets its own ChaCha stream derived
//! from the master seed, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn master_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a small tag, a batch size and a replicate index into a stream id.
pub fn stream_id(tag: u8, p: usize, replicate: usize) -> u64 {
    ((tag as u64) << 56) ^ ((p as u64 & 0xff_ffff) << 32) ^ (replicate as u64 & 0xffff_ffff)
}
