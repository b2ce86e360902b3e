//! Counter-based Gaussian source.
//!
//! Every draw is a pure function of `(seed, replicate, stream, counter)`, so
//! generation order and thread count never change the numbers produced.
//! Backed by ChaCha8 with random access through its stream and word
//! position.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS_PER_PAIR: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CounterRng {
    seed: u64,
    replicate: u64,
}

impl CounterRng {
    pub fn new(seed: u64, replicate: u64) -> Self {
        Self { seed, replicate }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    fn key(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replicate.to_le_bytes());
        key[16..24].copy_from_slice(b"macf-rng");
        key
    }

    /// Opens a cursor on one stream. Reads at increasing consecutive counters
    /// reuse the generator's block buffer.
    pub fn stream(&self, stream: u64) -> StreamCursor {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(stream);
        StreamCursor { rng }
    }

    pub fn gaussian_pair(&self, stream: u64, counter: u64) -> (f64, f64) {
        self.stream(stream).gaussian_pair(counter)
    }
}

pub struct StreamCursor {
    rng: ChaCha8Rng,
}

impl StreamCursor {
    /// Two independent standard normals at `counter`.
    pub fn gaussian_pair(&mut self, counter: u64) -> (f64, f64) {
        let pos = counter as u128 * WORDS_PER_PAIR;
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        box_muller(a, b)
    }
}

fn box_muller(a: u64, b: u64) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1] keeps the logarithm finite
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}
