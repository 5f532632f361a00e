//! Seeded generators for test functions and subsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::space::{Func, SubsetMask};

/// Deterministic source of sample functions. The same seed always yields the
/// same sequence on every platform.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.rng.random_range(lo..hi)
    }

    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.uniform(lo.ln(), hi.ln()).exp()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.random()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn gaussian(&mut self, n: usize) -> Func {
        Func::new((0..n).map(|_| self.normal()).collect())
    }

    /// Uniformly random subset; resampled until nonempty if requested.
    pub fn subset(&mut self, n: usize, nonempty: bool) -> SubsetMask {
        loop {
            let s = SubsetMask::new((0..n).map(|_| self.coin()).collect());
            if !nonempty || !s.is_empty() {
                return s;
            }
        }
    }

    /// A draw from the mixture used by the sampled inequality suites:
    /// scaled Gaussians, signed indicators, single spikes and `±a` sign
    /// patterns (extremizers of `‖·‖_∞` at fixed amplitude).
    pub fn mixture(&mut self, n: usize) -> Func {
        let scale = self.log_uniform(0.05, 20.0);
        match self.index(4) {
            0 | 1 => &self.gaussian(n) * scale,
            2 => {
                let sign = if self.coin() { 1.0 } else { -1.0 };
                &self.subset(n, true).indicator() * (sign * scale)
            }
            _ => {
                if self.coin() {
                    let mut u = Func::zeros(n);
                    u[self.index(n)] = if self.coin() { scale } else { -scale };
                    u
                } else {
                    Func::new(
                        (0..n)
                            .map(|_| if self.coin() { scale } else { -scale })
                            .collect(),
                    )
                }
            }
        }
    }
}
