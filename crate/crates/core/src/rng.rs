//! Deterministic counter-based random number generation.
//!
//! All stochastic pieces of the toolkit (mask generation, measurement noise,
//! weight initialization, scene synthesis) draw from [`CounterRng`], a
//! SplitMix64 generator run in counter mode: draw `n` is a pure function of
//! `(seed, n)`, so streams are reproducible bit-for-bit across platforms and
//! thread counts.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: maps a 64-bit state word to a well-mixed output.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 in counter mode.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
    /// Cached second output of the Box-Muller pair.
    gauss_spare: Option<f64>,
}

impl CounterRng {
    /// New stream identified by `seed`, positioned at counter zero.
    pub fn new(seed: u64) -> Self {
        CounterRng {
            seed,
            counter: 0,
            gauss_spare: None,
        }
    }

    /// Derive an independent stream, e.g. one per named substream.
    pub fn substream(&self, tag: u64) -> CounterRng {
        CounterRng::new(mix(self.seed ^ mix(tag.wrapping_add(GOLDEN_GAMMA))))
    }

    /// Next raw 64-bit output.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let n = self.counter;
        self.counter += 1;
        mix(self.seed.wrapping_add(n.wrapping_mul(GOLDEN_GAMMA)).wrapping_add(GOLDEN_GAMMA))
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` (n > 0), via 64-bit rejection-free scaling.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // 128-bit multiply keeps the distribution bias below 2^-64.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw (Box-Muller).
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.gauss_spare.take() {
            return z;
        }
        // u in (0, 1] so the log is finite.
        let u = 1.0 - self.uniform();
        let v = self.uniform();
        let r = (-2.0 * u.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * v;
        self.gauss_spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }
}
