//! Seeded, stream-split random number generation.
//!
//! Every consumer derives its generator from `(seed, scope, role)`, so one
//! role drawing more numbers never shifts another role's sequence and a
//! resumed run reproduces the streams without persisted generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Tournament = 1,
    Proposer = 2,
    Injection = 3,
    Initial = 4,
    Selection = 5,
}

/// Generator for `role` within `scope` (an iteration or generation index).
pub fn stream(seed: u64, scope: u64, role: StreamRole) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&scope.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(role as u64);
    rng
}
