//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha8 stream derived from the run
//! seed, so adding draws in one place never shifts another.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Stream identifiers. The high byte tags the consumer; the rest is a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ViewSampler,
    ViewOrder,
    OracleNoise { iter: u64, view: u64 },
    InitCloud,
    Floaters,
    SceneGen,
    ErrorMap { sample: u64 },
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::ViewSampler => 1 << 56,
            Stream::ViewOrder => 2 << 56,
            Stream::OracleNoise { iter, view } => {
                (3 << 56) | ((iter & 0xff_ffff_ffff) << 16) | (view & 0xffff)
            }
            Stream::InitCloud => 4 << 56,
            Stream::SceneGen => 5 << 56,
            Stream::Floaters => 6 << 56,
            Stream::ErrorMap { sample } => (7 << 56) | (sample & 0xffff_ffff),
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
