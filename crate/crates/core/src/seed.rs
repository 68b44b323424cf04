//! Labeled, hierarchical seeding.
//!
//! A [`SeedTree`] is a master seed plus a path of `(purpose, index)` pairs.
//! Each path hashes (SHA-256) to the 32-byte seed of a ChaCha20 stream, so a
//! stream depends only on the master seed and its path: replications can be
//! generated in any order, on any thread, and on any platform with the same
//! draws.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Random stream handed to every stochastic operation.
pub type Stream = ChaCha20Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeedTree {
    master_seed: u64,
    path: Vec<(String, u64)>,
}

impl SeedTree {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[(String, u64)] {
        &self.path
    }

    /// Extends the path by one labeled step.
    pub fn child(&self, purpose: &str, index: u64) -> SeedTree {
        let mut path = self.path.clone();
        path.push((purpose.to_owned(), index));
        SeedTree {
            master_seed: self.master_seed,
            path,
        }
    }

    /// Stream for this node's own path.
    pub fn stream(&self) -> Stream {
        let mut hasher = Sha256::new();
        hasher.update(b"hte-seed-tree/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for (label, index) in &self.path {
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
            hasher.update(index.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha20Rng::from_seed(seed)
    }

    pub fn derive_stream(&self, purpose: &str, index: u64) -> Stream {
        self.child(purpose, index).stream()
    }

    /// Human-readable path, e.g. `42/rep:3/model:1`.
    pub fn describe(&self) -> String {
        let mut out = self.master_seed.to_string();
        for (label, index) in &self.path {
            out.push('/');
            out.push_str(label);
            out.push(':');
            out.push_str(&index.to_string());
        }
        out
    }
}

pub fn derive_stream(tree: &SeedTree, purpose: &str, index: u64) -> Stream {
    tree.derive_stream(purpose, index)
}

/// Forks an independent stream off `rng`, consuming 32 bytes of it.
pub(crate) fn fork(rng: &mut Stream) -> Stream {
    ChaCha20Rng::from_rng(rng)
}
