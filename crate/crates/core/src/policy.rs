use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// A strictly positive probability vector over a finite vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy<T = f64> {
    probs: Vec<T>,
}

impl<T: Real> Policy<T> {
    /// Validates positivity and normalization (to 1e-12 in f64, scaled for f32).
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Shape(format!("policy needs |V| ≥ 2 entries, got {}", probs.len())));
        }
        for (index, &p) in probs.iter().enumerate() {
            if !(p > T::zero() && p.is_finite()) {
                return Err(Error::NonPositiveProbability { index, value: p.to_f64_lossy() });
            }
        }
        let total: T = probs.iter().copied().sum();
        let tol = T::tolerance(1e-12, 64.0);
        if (total - T::one()).abs() > tol {
            return Err(Error::Shape(format!("policy sums to {total}, expected 1")));
        }
        Ok(Self { probs })
    }

    /// Trusted constructor for solver outputs that are normalized by construction.
    pub(crate) fn from_raw(probs: Vec<T>) -> Self {
        Self { probs }
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("vocab_size", format!("|V| ≥ 2 required, got {n}")));
        }
        let p = T::one() / T::from_usize_lossy(n);
        Ok(Self { probs: vec![p; n] })
    }

    /// `(β, 1-β)`.
    pub fn two_arm(beta: T) -> Result<Self> {
        if !(beta > T::zero() && beta < T::one()) {
            return Err(Error::param("beta", format!("β ∈ (0,1) required, got {beta}")));
        }
        Ok(Self { probs: vec![beta, T::one() - beta] })
    }

    /// Normalizes nonnegative weights; every weight must be positive.
    pub fn from_weights(weights: &[T]) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero() && total.is_finite()) {
            return Err(Error::Shape("weights must have a positive finite sum".into()));
        }
        Self::new(weights.iter().map(|&w| w / total).collect())
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn min_prob(&self) -> T {
        self.probs.iter().copied().fold(T::infinity(), T::min)
    }

    /// Index of the largest probability (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn sum(&self) -> T {
        self.probs.iter().copied().sum()
    }

    /// Raises entries below `floor` to `floor` and rescales the rest so the
    /// total stays 1. Returns the L1 distance moved.
    pub fn enforce_floor(&mut self, floor: T) -> Result<T> {
        let n = self.probs.len();
        if floor * T::from_usize_lossy(n) > T::one() + T::epsilon() * T::lit(4.0) {
            return Err(Error::param("policy_floor", "π_min·|V| ≤ 1 required"));
        }
        let before = self.probs.clone();
        let mut pinned = vec![false; n];
        loop {
            let pinned_mass = floor * T::from_usize_lossy(pinned.iter().filter(|&&p| p).count());
            let free_mass: T = (0..n).filter(|&i| !pinned[i]).map(|i| before[i]).sum();
            let scale = (T::one() - pinned_mass) / free_mass;
            let mut changed = false;
            for i in 0..n {
                if !pinned[i] && before[i] * scale < floor {
                    pinned[i] = true;
                    changed = true;
                }
            }
            if !changed {
                for i in 0..n {
                    self.probs[i] = if pinned[i] { floor } else { before[i] * scale };
                }
                break;
            }
        }
        let drift = before.iter().zip(&self.probs).map(|(&a, &b)| (a - b).abs()).sum();
        Ok(drift)
    }

    pub fn check_floor(&self, floor: T) -> Result<()> {
        for (index, &p) in self.probs.iter().enumerate() {
            // one part in 1e12 slack for renormalization rounding
            if p < floor * (T::one() - T::tolerance(1e-12, 16.0)) {
                return Err(Error::FloorViolation { index, value: p.to_f64_lossy(), floor: floor.to_f64_lossy() });
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Policy<U> {
        Policy { probs: self.probs.iter().map(|&p| U::lit(p.to_f64_lossy())).collect() }
    }
}
