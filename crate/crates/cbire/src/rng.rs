//! Deterministic stream splitting for Monte-Carlo work.
//!
//! Every driver derives one ChaCha stream per path from the master seed:
//! the seed keys the generator and the path index selects the stream, so
//! path `i` produces the same draws no matter how work is scheduled.
//! Stream 0 is reserved for set-level draws (for example the single long
//! chain behind stationary sampling); per-path work uses streams `1..`.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Generator for `stream_index` under `seed`.
pub fn stream(seed: u64, stream_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}
