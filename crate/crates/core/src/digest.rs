//! Stable hashing helpers. These feed coverage ledgers and golden transcripts,
//! so they must not depend on std's randomized hashers.

use sha2::{Digest, Sha256};

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_continue(FNV_OFFSET, bytes)
}

/// Continues an FNV-1a chain from a previous state.
pub fn fnv1a_continue(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// 128-bit truncated SHA-256, used where collisions must be negligible
/// (error-sequence digests, trace digests).
pub fn digest128(bytes: &[u8]) -> u128 {
    let out = Sha256::digest(bytes);
    u128::from_le_bytes(out[..16].try_into().unwrap())
}

/// Incremental SHA-256 writer for structured digests.
pub struct DigestWriter {
    hasher: Sha256,
}

impl DigestWriter {
    pub fn new() -> Self {
        DigestWriter {
            hasher: Sha256::new(),
        }
    }

    pub fn u64(&mut self, v: u64) {
        self.hasher.update(v.to_le_bytes());
    }

    pub fn u8(&mut self, v: u8) {
        self.hasher.update([v]);
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.hasher.update(v);
    }

    pub fn finish(self) -> u128 {
        let out = self.hasher.finalize();
        u128::from_le_bytes(out[..16].try_into().unwrap())
    }
}

impl Default for DigestWriter {
    fn default() -> Self {
        Self::new()
    }
}
