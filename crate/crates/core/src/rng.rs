//! Counter-addressed random streams.
//!
//! Draws are addressed by `(seed, domain, slot, counter)` instead of being
//! consumed sequentially, so a given arm's draw for a given week does not
//! depend on how many other arms or weeks were simulated, or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Words reserved per `(slot, counter)` cell; enough for eight `f64` draws.
const WORDS_PER_CELL: u128 = 16;

/// Distinct purposes get unrelated keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Transition = 1,
    Selection = 2,
    Generator = 3,
    Bootstrap = 4,
    GroupStream = 5,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, domain: Domain, extra: u64) -> u64 {
    mix64(mix64(seed ^ mix64(domain as u64)) ^ extra)
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    rng: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64, domain: Domain) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, 0)),
        }
    }

    fn position(&mut self, slot: u64, counter: u64) {
        self.rng.set_stream(slot);
        self.rng.set_word_pos(counter as u128 * WORDS_PER_CELL);
    }

    /// Uniform draw in `[0, 1)` for `(slot, counter)`.
    pub fn uniform(&mut self, slot: u64, counter: u64) -> f64 {
        self.position(slot, counter);
        self.rng.gen::<f64>()
    }

    /// An independent sequential generator for a whole slot.
    pub fn stream(&self, slot: u64) -> ChaCha8Rng {
        let mut rng = self.rng.clone();
        rng.set_stream(slot);
        rng.set_word_pos(0);
        rng
    }
}
