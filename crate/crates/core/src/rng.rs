//! Counter-based random substreams.
//!
//! Every consumer of randomness asks for a stream addressed by a path of
//! integers (experiment, cell, block, ...). The path is folded into a ChaCha
//! stream id, so two blocks never share draws and a block's draws do not
//! depend on which worker runs it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Replications per Monte Carlo block. Fixed so block boundaries, and hence
/// results, are independent of the worker count.
pub const BLOCK_SIZE: usize = 2048;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a textual label (FNV-1a).
pub fn tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// RNG for the stream addressed by `path` under the master `seed`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let stream = path
        .iter()
        .fold(0x5851_F42D_4C95_7F2Du64, |acc, &p| splitmix64(acc ^ splitmix64(p)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
