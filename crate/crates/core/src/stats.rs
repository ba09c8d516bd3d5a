//! Streaming moments and seeded parallel Monte Carlo trials.

use crate::enumerate::par_fold;
use crate::rng::{stream, Stream};
use serde::{Deserialize, Serialize};

/// Welford accumulator, mergeable in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        Self { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate { mean: self.mean, std_err: self.std_err(), samples: self.n }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

impl McEstimate {
    /// `|mean - target| ≤ k·SE`, with a floor for exactly-zero SE.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err + 1e-15 * target.abs().max(1.0)
    }
}

/// Runs `trials` independent trials, trial `t` drawing from `stream(seed, t)`,
/// and accumulates each of the `K` outputs. Reduction order is fixed.
pub fn par_trials<const K: usize, F>(trials: u64, seed: u64, f: F) -> [Moments; K]
where
    F: Fn(u64, &mut Stream) -> [f64; K] + Sync,
{
    par_fold(
        trials,
        [Moments::default(); K],
        |mut acc, t| {
            let out = f(t, &mut stream(seed, t));
            for (m, x) in acc.iter_mut().zip(out) {
                m.push(x);
            }
            acc
        },
        |a, b| {
            let mut out = a;
            for k in 0..K {
                out[k] = a[k].merge(b[k]);
            }
            out
        },
    )
}
