//! Seeded random streams. Every consumer of randomness asks for its own
//! ChaCha stream keyed by a purpose tag, so adding a consumer never shifts
//! the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, tag: Tag) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.0);
    rng
}

/// Stream identifier built from a purpose code and up to two indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tag(pub u64);

impl Tag {
    pub const fn new(purpose: u16, major: u32, minor: u16) -> Self {
        Tag(((purpose as u64) << 48) | ((major as u64) << 16) | minor as u64)
    }
}

pub mod purpose {
    pub const INIT: u16 = 1;
    pub const SUBSAMPLE_PSEUDO: u16 = 2;
    pub const SUBSAMPLE_LABELED: u16 = 3;
    pub const CURRICULUM: u16 = 4;
    pub const SHUFFLE: u16 = 5;
    pub const BOOTSTRAP: u16 = 6;
    pub const SPLIT: u16 = 7;
    pub const NOISE: u16 = 8;
    pub const SYNTH: u16 = 9;
    pub const DISTRACTOR: u16 = 10;
    pub const VALIDATION: u16 = 11;
    pub const MEMBER_SEED: u16 = 12;
    pub const FINAL_SEED: u16 = 13;
}

/// A child seed drawn from a tagged stream.
pub fn derive(seed: u64, tag: Tag) -> u64 {
    use rand::RngCore;
    stream(seed, tag).next_u64()
}
