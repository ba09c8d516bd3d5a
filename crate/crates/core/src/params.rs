use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Every constant that appears in the bounds: `(G, η, ε, L, |V|, π_min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams<T = f64> {
    group_size: usize,
    step_size: T,
    clip_ratio: T,
    rollout_length: usize,
    vocab_size: usize,
    policy_floor: T,
}

impl<T: Real> HyperParams<T> {
    pub fn new(
        group_size: usize,
        step_size: T,
        clip_ratio: T,
        rollout_length: usize,
        vocab_size: usize,
        policy_floor: T,
    ) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::param("group_size", format!("G ≥ 2 required, got {group_size}")));
        }
        if !(step_size.is_finite() && step_size >= T::zero()) {
            return Err(Error::param("step_size", format!("η ≥ 0 and finite required, got {step_size}")));
        }
        if !(clip_ratio > T::zero() && clip_ratio < T::one()) {
            return Err(Error::param("clip_ratio", format!("0 < ε < 1 required, got {clip_ratio}")));
        }
        if rollout_length < 1 {
            return Err(Error::param("rollout_length", "L ≥ 1 required, got 0"));
        }
        if vocab_size < 2 {
            return Err(Error::param("vocab_size", format!("|V| ≥ 2 required, got {vocab_size}")));
        }
        if !(policy_floor > T::zero()) {
            return Err(Error::param("policy_floor", format!("π_min > 0 required, got {policy_floor}")));
        }
        // π_min·|V| ≤ 1, with one ulp of slack so that π_min = 1/|V| is accepted.
        let load = policy_floor * T::from_usize_lossy(vocab_size);
        if load > T::one() + T::epsilon() * T::lit(4.0) {
            return Err(Error::param("policy_floor", format!("π_min·|V| ≤ 1 required, got {load}")));
        }
        Ok(Self { group_size, step_size, clip_ratio, rollout_length, vocab_size, policy_floor })
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }
    pub fn step_size(&self) -> T {
        self.step_size
    }
    pub fn clip_ratio(&self) -> T {
        self.clip_ratio
    }
    pub fn rollout_length(&self) -> usize {
        self.rollout_length
    }
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }
    pub fn policy_floor(&self) -> T {
        self.policy_floor
    }

    /// Same parameters with a different step size.
    pub fn with_step_size(&self, eta: T) -> Result<Self> {
        Self::new(self.group_size, eta, self.clip_ratio, self.rollout_length, self.vocab_size, self.policy_floor)
    }

    pub fn g(&self) -> T {
        T::from_usize_lossy(self.group_size)
    }
}
