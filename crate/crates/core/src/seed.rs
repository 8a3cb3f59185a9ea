//! Root-seed expansion.
//!
//! Every random stream in the pipeline is derived from one root seed and a
//! component tag with a splitmix64 counter, so adding a consumer never shifts
//! the stream of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Communities,
    Init,
    Synthetic,
    Injection,
    Run,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Communities => 0x636f_6d6d,
            Stream::Init => 0x696e_6974,
            Stream::Synthetic => 0x7379_6e74,
            Stream::Injection => 0x696e_6a65,
            Stream::Run => 0x7275_6e73,
        }
    }
}

pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th draw of `stream` under `root`.
pub fn derive(root: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ stream.tag()).wrapping_add(index))
}

pub fn rng(root: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, stream, 0))
}
