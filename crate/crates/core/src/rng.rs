//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), keyed
//! by a 256-bit key whose first 8 bytes are the user seed (little-endian),
//! whose next 8 bytes are a [`Domain`] tag (little-endian), and the rest
//! zero. The item index (shuffle number, trial number, ...) selects the
//! ChaCha stream. Stream `k` therefore never depends on how many other
//! streams are drawn.
//!
//! Bounded integers use the multiply-high map `(x * n) >> 64` on one
//! `u64` draw, without rejection, so ports only need the raw ChaCha8 output.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Shuffle = 1,
    Synth = 2,
    Rademacher = 3,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Uniform-ish integer in `0..n` (`n >= 1`); bias is below `n / 2^64`.
pub fn bounded<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n >= 1);
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Fisher-Yates from the back: for `i = len-1 .. 1`, swap `i` with
/// `bounded(i + 1)`.
pub fn shuffle<T, R: RngCore>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i + 1);
        items.swap(i, j);
    }
}
