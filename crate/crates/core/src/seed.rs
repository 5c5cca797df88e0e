//! Seed derivation.
//!
//! Every random stream in a run is derived from one master seed and a purpose
//! string: the first eight bytes (little-endian) of
//! `SHA-256(master.to_le_bytes() || purpose.as_bytes())`. Purposes in use:
//!
//! | purpose                  | stream                                   |
//! |--------------------------|------------------------------------------|
//! | `dataset`                | synthetic sample generation              |
//! | `quadratic`              | generated quadratic curvature            |
//! | `init`                   | initial model weights                    |
//! | `shuffle/{worker}/{ep}`  | per-worker, per-epoch shard permutation  |
//! | `jitter/{worker}/{it}`   | compute-time jitter factor               |
//! | `sweep/{index}`          | seed of the `index`-th sweep point       |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(master: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose))
}

/// One standard normal draw.
pub fn normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Uniform draw in `[0, 1)` determined entirely by `(master, purpose)`.
pub fn unit_draw(master: u64, purpose: &str) -> f64 {
    (derive_seed(master, purpose) >> 11) as f64 / (1u64 << 53) as f64
}
