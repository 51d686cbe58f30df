//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by
//! `(master seed, domain tag)` and selected by a 64-bit stream index, so a
//! path's noise depends only on its index and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Brownian increments of the primary (or coupled) process.
pub const DOMAIN_NOISE: u64 = 0x4e4f_4953_4500_0001;
/// Independent noise for oracle re-simulations.
pub const DOMAIN_ORACLE: u64 = 0x4f52_4143_4c45_0002;
/// Random probes for variational-inequality checks.
pub const DOMAIN_PROBE: u64 = 0x5052_4f42_4500_0003;
/// Random samples for constant estimation and assumption checks.
pub const DOMAIN_SAMPLE: u64 = 0x5341_4d50_4c45_0004;

pub fn stream(master_seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
