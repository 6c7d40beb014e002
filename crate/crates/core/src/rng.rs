//! Counter-based splittable RNG.
//!
//! Every draw is a pure function of (seed, counter), so shards of a dataset
//! can be generated in any order, or in parallel, and still agree bit for bit
//! with a sequential pass. The mixer is splitmix64, which passes BigCrush and
//! is cheap enough to treat as a random-access function.

use crate::{Error, Point, Result};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A splittable counter RNG. `Copy`-cheap; deriving a child stream never
/// perturbs the parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRng {
    key: u64,
    counter: u64,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        // One mixing round decorrelates small user seeds (0, 1, 2, ...).
        SplitRng {
            key: splitmix64(seed),
            counter: 0,
        }
    }

    /// Derives an independent child stream labeled by `label`.
    pub fn derive(&self, label: u64) -> Self {
        SplitRng {
            key: splitmix64(self.key ^ splitmix64(label.wrapping_mul(GOLDEN_GAMMA))),
            counter: 0,
        }
    }

    /// Random-access draw: the value at absolute counter position `index`,
    /// independent of any sequential draws made on this stream.
    #[inline]
    pub fn u64_at(&self, index: u64) -> u64 {
        splitmix64(self.key.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.u64_at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / ((1u64 << 53) as f64))
    }

    #[inline]
    pub fn f64_at(&self, index: u64) -> f64 {
        (self.u64_at(index) >> 11) as f64 * (1.0 / ((1u64 << 53) as f64))
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Deterministic Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Draws `count` points uniformly from the hypercube [-a, a]^dim.
///
/// Coordinate (sample j, axis k) is read at counter position j*dim + k, so
/// the output is a pure function of the arguments and identical under any
/// sharding of the index range.
pub fn uniform_box_sample(dim: usize, a: f64, count: usize, seed: u64) -> Result<Vec<Point>> {
    if dim < 1 {
        return Err(Error::invalid("dim must be >= 1"));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::invalid(format!(
            "box halfwidth a must be > 0, got {a}"
        )));
    }
    if count < 1 {
        return Err(Error::invalid("count must be >= 1"));
    }
    let rng = SplitRng::new(seed);
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let mut p = Vec::with_capacity(dim);
        for k in 0..dim {
            let u = rng.f64_at((j * dim + k) as u64);
            p.push(a * (2.0 * u - 1.0));
        }
        out.push(p);
    }
    Ok(out)
}
