//! Deterministic random substreams.
//!
//! Every random draw in a simulation comes from a stream identified by a
//! master seed plus a path such as `[run, iteration, worker, purpose]`.
//! Streams are independent of evaluation order, so runs can be parallelized
//! or partially evaluated (e.g. stragglers' batches are never drawn) without
//! changing any other draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag for the latency draw of a worker.
pub const PURPOSE_DELAY: u64 = 0xD1;
/// Purpose tag for a worker's sub-batch selection.
pub const PURPOSE_SAMPLE: u64 = 0x5A;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a path of integers into a single 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn substream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
