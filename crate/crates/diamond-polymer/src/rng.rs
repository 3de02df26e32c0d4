//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream whose 256-bit key packs the master
//! seed, a domain tag and a 128-bit counter key. Replicate `i` of a run with
//! master seed `m` reads `stream(m, tag, i)`; extending a replicate set never
//! changes the draws of existing replicates, and disorder values keyed by
//! address need no storage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags that keep unrelated consumers of one master seed apart.
pub mod tag {
    pub const VERTEX_FIELD: u64 = 0x7665_7274_6578_0001;
    pub const EDGE_FIELD: u64 = 0x6564_6765_0000_0002;
    pub const REPLICATE: u64 = 0x7265_706c_0000_0003;
    pub const AUX: u64 = 0x6175_7800_0000_0004;
}

fn key(master: u64, tag: u64, counter: u128) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[..8].copy_from_slice(&master.to_le_bytes());
    k[8..16].copy_from_slice(&tag.to_le_bytes());
    k[16..].copy_from_slice(&counter.to_le_bytes());
    k
}

/// Independent stream number `index` under `(master, tag)`.
pub fn stream(master: u64, tag: u64, index: u128) -> StreamRng {
    ChaCha8Rng::from_seed(key(master, tag, index))
}

/// Stream for Monte Carlo replicate `index`.
pub fn replicate(master: u64, index: u64) -> StreamRng {
    stream(master, tag::REPLICATE, index as u128)
}

/// Derives a child master seed, e.g. one per grid point of an experiment.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    use rand::RngCore;
    stream(master, tag::AUX, label as u128).next_u64()
}
