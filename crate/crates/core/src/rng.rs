//! Seeded random source shared by the CLI and the test harness.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood): a 64-bit counter
//! advanced by the golden-ratio increment `0x9E3779B97F4A7C15`, whose value is
//! passed through a fixed finalizer. Uniform `[0, 1)` doubles take the top 53
//! bits of each output and scale by `2^-53`. Both rules are part of the file
//! interface: the same seed yields the same cost matrices in any
//! implementation that follows them.

use ndarray::Array2;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    counter: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { counter: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.counter;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi);
        let span = (hi - lo + 1) as u64;
        lo + (self.next_u64() % span) as usize
    }

    /// Row-major `rows × cols` matrix of uniform `[0, 1)` draws.
    pub fn uniform_matrix(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || self.next_f64())
    }
}
