//! Portable seeded randomness.
//!
//! Every random draw in the crate goes through [`Rng`], a thin wrapper over
//! xoshiro256++ (Blackman & Vigna). The generator is seeded from a single
//! `u64` by expanding it with SplitMix64 (increment `0x9E3779B97F4A7C15`,
//! finalizer multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`,
//! shifts 30/27/31), exactly as `rand_xoshiro` does for `seed_from_u64`.
//!
//! Independent streams are keyed by a tuple of integers: the key is folded
//! into a seed with [`derive_seed`], so the stream for `(seed, user_id)` does
//! not depend on how many other streams were drawn before it.
//!
//! All derived quantities are defined on top of `next_u64`:
//!
//! * `uniform()` is `(x >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)` is Lemire's multiply-shift with rejection, unbiased.
//! * `normal()` is the Marsaglia polar method (the spare value is discarded).
//! * `gamma(a)` is Marsaglia-Tsang; for `a < 1` it draws `gamma(a + 1)` and
//!   scales by `U^(1/a)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a seed and a stream key into a new seed.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    let mut state = splitmix64_mix(seed.wrapping_add(GOLDEN_GAMMA));
    for &k in key {
        state = splitmix64_mix(state ^ splitmix64_mix(k.wrapping_add(GOLDEN_GAMMA)));
    }
    state
}

#[derive(Debug, Clone)]
pub struct Rng {
    inner: Xoshiro256PlusPlus,
}

impl Rng {
    pub fn seeded(seed: u64) -> Self {
        Rng {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn stream(seed: u64, key: &[u64]) -> Self {
        Rng::seeded(derive_seed(seed, key))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    fn uniform_open_low(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// Gamma(shape, 1). Panics unless `shape > 0`.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0 && shape.is_finite(), "gamma shape {shape}");
        if shape < 1.0 {
            let boost = self.uniform_open_low().powf(1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform_open_low();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Symmetric Dirichlet draw of dimension `dim` via normalized gamma variates.
    pub fn dirichlet(&mut self, alpha: f64, dim: usize) -> Vec<f64> {
        loop {
            let draws: Vec<f64> = (0..dim).map(|_| self.gamma(alpha)).collect();
            let total: f64 = draws.iter().sum();
            // Tiny alphas can underflow every component.
            if total > 0.0 && total.is_finite() {
                return draws.into_iter().map(|g| g / total).collect();
            }
        }
    }

    /// Geometric on `{1, 2, ...}` with the given mean (success probability `1/mean`).
    pub fn geometric(&mut self, mean: f64) -> u64 {
        assert!(mean >= 1.0, "geometric mean {mean} < 1");
        if mean == 1.0 {
            return 1;
        }
        let p = 1.0 / mean;
        let u = self.uniform_open_low();
        let k = (u.ln() / (-p).ln_1p()).ceil();
        if k < 1.0 {
            1
        } else if k > u32::MAX as f64 {
            u32::MAX as u64
        } else {
            k as u64
        }
    }

    /// Index into `weights` drawn proportionally. Weights must sum to ~1.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
            }
            acc += w;
            if u < acc {
                return i;
            }
        }
        last_positive
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// Draws `count` distinct elements of `0..n` (partial Fisher-Yates), in draw order.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot sample {count} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below_usize(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}
