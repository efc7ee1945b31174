//! Counter-addressed random streams.
//!
//! Every draw in a simulation is addressed by `(seed, domain, particle, step)`.
//! The `(seed, domain)` pair selects a ChaCha8 key, the particle index selects
//! the ChaCha stream and the step index selects a block offset inside it, so
//! the numbers a particle consumes never depend on thread scheduling or on how
//! many other particles exist.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per step inside one stream (2^24 u32 words).
const STEP_SHIFT: u32 = 24;

/// Independent purposes for which randomness is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Init = 0,
    Brownian = 1,
    Regime = 2,
    RegimePartner = 3,
    Subsample = 4,
    InitPartner = 5,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory for the streams of one `(seed, domain)` pair.
#[derive(Debug, Clone)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn new(seed: u64, domain: Domain) -> Self {
        let mut state = seed ^ (domain as u64).wrapping_mul(0xd1b5_4a32_d192_ed03);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    /// Generator positioned at the start of `(particle, step)`.
    pub fn rng(&self, particle: u64, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(particle);
        rng.set_word_pos((step as u128) << STEP_SHIFT);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_addressable() {
        let key = StreamKey::new(7, Domain::Brownian);
        let a: f64 = key.rng(3, 10).random();
        let b: f64 = key.rng(3, 10).random();
        assert_eq!(a.to_bits(), b.to_bits());
        let c: f64 = key.rng(3, 11).random();
        let d: f64 = key.rng(4, 10).random();
        let e: f64 = StreamKey::new(7, Domain::Regime).rng(3, 10).random();
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }

    #[test]
    fn step_blocks_do_not_overlap() {
        let key = StreamKey::new(1, Domain::Init);
        let mut first = key.rng(0, 0);
        // consume far more than any step ever needs; must not reach step 1
        let mut tail = 0u32;
        for _ in 0..10_000 {
            tail = first.random();
        }
        let second: u32 = key.rng(0, 1).random();
        assert_ne!(tail, second);
    }
}
