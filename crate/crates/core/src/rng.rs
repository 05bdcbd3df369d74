//! Named random streams split from a single master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed and
//! positioned on its own stream id, so consumption in one stream never
//! shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Init,
    DropoutMain,
    DropoutMix,
    PairSampling,
    BetaSampling,
    /// Pairs for the miss-rate case study.
    CaseStudy,
    /// Synthetic graph generation.
    Generator,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::DropoutMain => 2,
            Stream::DropoutMix => 3,
            Stream::PairSampling => 4,
            Stream::BetaSampling => 5,
            Stream::CaseStudy => 6,
            Stream::Generator => 7,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
