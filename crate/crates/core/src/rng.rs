//! Seeded random streams.
//!
//! A dataset is defined by `(master seed, configuration)`, so the exact
//! sequence of draws is part of the file-format contract. Every stream is a
//! ChaCha8 generator keyed from the master seed and a domain tag, with the
//! per-item index selecting the ChaCha stream id. Sub-streams for different
//! items are therefore independent of evaluation order and thread count.
//!
//! Draw primitives are defined here at the bit level instead of going through
//! `rand` distributions, whose sampling algorithms are allowed to change
//! between releases:
//!
//! * `unit()` takes the top 53 bits of one `u64`: `(x >> 11) * 2^-53`.
//! * `uniform(lo, hi)` is `lo + (hi - lo) * unit()`.
//! * `below(n)` is the high word of the 128-bit product `x * n`.
//! * `coin()` is the top bit of one `u64`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Domain tags that separate the sub-streams used by different stages.
pub mod domain {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const AUGMENT: u64 = 0x4155_474d;
    pub const NAIVE: u64 = 0x4e41_4956;
    pub const RENDER: u64 = 0x5245_4e44;
    pub const WARM_CLASSES: u64 = 0x5743_4c53;
    pub const WARM_SPRITE: u64 = 0x5753_5052;
    pub const WARM_BACKGROUND: u64 = 0x5742_4b47;
    pub const FRESH: u64 = 0x4652_5348;
    pub const CACHED: u64 = 0x4341_4348;
    pub const COMPOSE: u64 = 0x434f_4d50;
    pub const REFRESH: u64 = 0x5245_4652;
    pub const STUDY: u64 = 0x5354_4459;
    pub const HISTOGRAM: u64 = 0x4849_5354;
    pub const BENCH: u64 = 0x4245_4e43;
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn expand_key(seed: u64, domain: u64) -> [u8; 32] {
    let mut state = seed ^ domain.rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha8Rng,
}

/// [`Stream::unit`] applied to an already drawn `u64`.
#[inline]
pub fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * TWO_POW_M53
}

impl Stream {
    /// The root stream of a master seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::derive(seed, 0, 0)
    }

    /// Sub-stream `index` of `domain` under `seed`.
    pub fn derive(seed: u64, domain: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(expand_key(seed, domain));
        inner.set_stream(index);
        Stream { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Fill `out` with the next `out.len()` values of [`next_u64`](Self::next_u64)
    /// in one pass over the cipher output.
    pub fn fill_u64(&mut self, out: &mut [u64]) {
        let mut bytes = vec![0u8; out.len() * 8];
        self.inner.fill_bytes(&mut bytes);
        for (v, b) in out.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = u64::from_le_bytes(b.try_into().unwrap());
        }
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        unit_from_bits(self.next_u64())
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the interval is empty.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    #[inline]
    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    #[inline]
    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// `-1.0` or `+1.0` with equal probability.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.coin() {
            1.0
        } else {
            -1.0
        }
    }

    /// Partial Fisher-Yates: the first `k` entries of `items` become a
    /// uniformly random ordered sample without replacement.
    pub fn choose_prefix<T>(&mut self, items: &mut [T], k: usize) {
        let k = k.min(items.len());
        for i in 0..k {
            let j = i + self.index(items.len() - i);
            items.swap(i, j);
        }
    }
}
