//! Counter-based random substreams.
//!
//! Every unit of parallel work (a bootstrap replicate, an MCMC chain, a
//! simulated dataset) draws from a ChaCha8 stream keyed only by the base
//! seed and its own coordinates, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child key from a parent key and a coordinate.
pub fn derive(key: u64, coordinate: u64) -> u64 {
    mix(mix(key) ^ coordinate.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Stream for `(seed, index)`; the index selects the ChaCha stream word.
pub fn substream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    rng.set_stream(index);
    rng
}

/// Stream for a nested coordinate path such as `(seed, scenario, replicate)`.
pub fn substream_path(seed: u64, path: &[u64]) -> StreamRng {
    match path.split_last() {
        None => substream(seed, 0),
        Some((last, prefix)) => {
            let key = prefix.iter().fold(seed, |k, &c| derive(k, c));
            substream(key, *last)
        }
    }
}
