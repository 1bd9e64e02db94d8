//! Counter-based random streams.
//!
//! Samplers never share a mutable generator. Every (replica, step) pair is
//! keyed into its own ChaCha8 stream derived from the master seed, so a
//! parallel sweep over replicas produces the same draws as a sequential one,
//! in any execution order, on any number of worker threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard 64-bit finalizer used to key streams.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a generator from the master seed and a key path.
///
/// Typical key paths: `[replica, step]` for walk increments,
/// `[lane, replica, step]` when several experiments share one master seed.
pub fn stream(master_seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = fold_key(master_seed, path);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Derives a child master seed from a key path, for handing a whole
/// sub-experiment (one replica, one level) its own seed while keeping the
/// overall keying `(master, level, replica, step)` collision-free.
pub fn derive_seed(master_seed: u64, path: &[u64]) -> u64 {
    let mut state = fold_key(master_seed, path);
    splitmix64(&mut state)
}

fn fold_key(master_seed: u64, path: &[u64]) -> u64 {
    let mut state = master_seed ^ 0x6a09_e667_f3bc_c908; // sqrt(2) bits; decouples seed 0 from the all-zero state
    for &component in path {
        // One nonlinear round per component keeps the fold order-sensitive:
        // [1, 2], [2, 1], and [1] all key different streams.
        state = splitmix64(&mut state) ^ component.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    state
}
