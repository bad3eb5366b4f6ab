//! Deterministic random number generation for simulations.
//!
//! Transcripts are compared byte-for-byte across runs and platforms, so every
//! stochastic choice in the simulator draws from [`DetRng`], a SplitMix64
//! generator. The algorithm is fixed here rather than borrowed from a crate so
//! that the stream can never shift underneath recorded scenarios.
//!
//! SplitMix64 (Steele, Lea, Flood; as published by Vigna): the state advances
//! by the golden-gamma constant and the output is a bijective scramble of the
//! state, so every seed yields a full-period 2^64 sequence.

/// Seedable, portable generator with a fixed algorithm.
#[derive(Debug, Clone)]
pub struct DetRng {
    state: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng { state: seed }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Bernoulli coin: true with probability `p` (clamped to [0, 1]).
    ///
    /// Implemented as an integer threshold compare so the result depends only
    /// on the raw stream and the IEEE-754 value of `p`.
    pub fn coin(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        // p in (0,1): scale into the u64 range.
        let threshold = (p * (u64::MAX as f64)) as u64;
        self.next_u64() <= threshold
    }

    /// Uniform draw from the inclusive range `[lo, hi]`.
    ///
    /// Plain modulo reduction; the bias is far below anything a desk-scale
    /// scenario can observe and the mapping stays portable.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        if span == 0 {
            // lo == 0 && hi == u64::MAX
            return self.next_u64();
        }
        lo + self.next_u64() % span
    }

    /// A single random bit, used for sync coins.
    pub fn bit(&mut self) -> u64 {
        self.next_u64() & 1
    }
}
