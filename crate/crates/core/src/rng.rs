//! Keyed random substreams.
//!
//! Every random quantity in a run is drawn from its own ChaCha stream, keyed by
//! the scenario seed and an identifier for what is being drawn. Moving one node
//! or resampling the users therefore never perturbs the draws for other links.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies one independent random stream within a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    UserPlacement,
    DirectLink { user: usize },
    BsRisLink { ris: usize },
    RisUserLink { ris: usize, user: usize },
    Pricing,
    FollowerRestart { restart: usize },
    Oracle { restart: usize },
    TinyInstance { index: usize },
}

impl Stream {
    fn key(self) -> u64 {
        // class in the top byte, two 24-bit endpoint indices below it
        let (class, a, b) = match self {
            Stream::UserPlacement => (1u64, 0, 0),
            Stream::DirectLink { user } => (2, user, 0),
            Stream::BsRisLink { ris } => (3, ris, 0),
            Stream::RisUserLink { ris, user } => (4, ris, user),
            Stream::Pricing => (5, 0, 0),
            Stream::FollowerRestart { restart } => (6, restart, 0),
            Stream::Oracle { restart } => (7, restart, 0),
            Stream::TinyInstance { index } => (8, index, 0),
        };
        let mask = (1u64 << 24) - 1;
        (class << 56) | ((a as u64 & mask) << 24) | (b as u64 & mask)
    }
}

/// Deterministic generator for `stream` under `seed`.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.key());
    rng
}
