//! Named, counter-derived RNG streams.
//!
//! Every stochastic stage draws from a stream derived from
//! `(master_seed, domain, indices...)`, so Monte-Carlo trials are
//! order-independent and reproducible regardless of worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream handle; this alias is the only RNG type used across the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives an independent stream for `(master_seed, domain, indices)`.
pub fn stream(master_seed: u64, domain: &str, indices: &[u64]) -> Rng {
    let mut state = master_seed ^ fnv1a(domain.as_bytes());
    for &i in indices {
        state ^= i.wrapping_mul(0x2545_f491_4f6c_dd1d);
        splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
