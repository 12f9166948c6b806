//! Deterministic, platform-independent random streams.
//!
//! Every stochastic operation takes an [`RngStream`] derived from a global
//! seed plus a textual stream id, so results do not depend on call order or
//! thread schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, 64-bit. Stable across platforms, unlike `DefaultHasher`.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: &str) -> Self {
        RngStream { seed, stream: fnv1a(stream_id.as_bytes()) }
    }

    /// Sub-stream keyed by another label, e.g. per image or per iteration.
    pub fn derive(&self, label: &str) -> RngStream {
        let mut bytes = Vec::with_capacity(label.len() + 8);
        bytes.extend_from_slice(&self.stream.to_le_bytes());
        bytes.extend_from_slice(label.as_bytes());
        RngStream { seed: self.seed, stream: fnv1a(&bytes) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// Stable 64-bit digest of a label, used for per-record seeds in manifests.
pub fn stable_hash(label: &str) -> u64 {
    fnv1a(label.as_bytes())
}
