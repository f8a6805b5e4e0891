//! Reproducible random streams.
//!
//! Every randomized routine takes a `u64` seed. Replicate `i` draws from
//! stream `i` of the ChaCha8 generator keyed by that seed, so results do not
//! depend on how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
