//! Seeded random-number substreams.
//!
//! Each chain owns three independent ChaCha streams derived from one seed:
//! proposal noise, likelihood-estimator noise and accept/reject uniforms.
//! Keeping them apart means a kernel that skips a draw on one stream (for
//! instance a Stage Two ratio of exactly zero) leaves the others aligned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PROPOSAL_STREAM: u64 = 0;
const ESTIMATOR_STREAM: u64 = 1;
const ACCEPT_STREAM: u64 = 2;

/// A generator on stream `stream` of the ChaCha sequence keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-chain generators.
#[derive(Debug, Clone)]
pub struct Streams {
    pub proposal: ChaCha8Rng,
    pub estimator: ChaCha8Rng,
    pub accept: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            proposal: substream(seed, PROPOSAL_STREAM),
            estimator: substream(seed, ESTIMATOR_STREAM),
            accept: substream(seed, ACCEPT_STREAM),
        }
    }
}

/// Derives a child seed for cell `index` of an experiment seeded with `seed`
/// (SplitMix64 finaliser), so cells get unrelated streams.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
