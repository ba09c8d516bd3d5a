//! Upper-clipped mirror-descent update.
//!
//! Maximizes `Ĵ(π) - KL(π‖π_old)/η` over the simplex. Stationarity gives, per
//! token, `log r(a) = η(S_-(a) + S_+(a)·ξ_a)/(G·π_old(a)) - κ` with
//! `κ = ηλ + 1` and `ξ_a ∈ ∂min{r, 1+ε}`. For fixed `κ` the ratio is
//! `max(e^{c0-κ}, min(e^{c1-κ}, 1+ε))`, which is nonincreasing in `κ`, so the
//! normalization is solved by bisection on `κ`.

use crate::advantage::{AdvantageGroup, RolloutGroup, SignedMass};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `ξ = 1`, ratio at or below the cap.
    Unclipped,
    /// Ratio pinned at `1+ε`, `ξ ∈ [0,1]`.
    Kink,
    /// `ξ = 0`, ratio above the cap.
    AboveCap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktOptions<T = f64> {
    pub normalization_tol: T,
    pub stationarity_tol: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for KktOptions<T> {
    fn default() -> Self {
        Self {
            normalization_tol: T::tolerance(1e-12, 64.0),
            stationarity_tol: T::tolerance(1e-9, 4096.0),
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktSolution<T = f64> {
    pub ratios: Vec<T>,
    pub kappa: T,
    /// `λ = (κ - 1)/η`; infinite when `η = 0`.
    pub lambda: T,
    pub branch: Vec<Branch>,
    pub xi: Vec<T>,
    /// Multipliers of `r ≥ 0`; never active for `π_old > 0`.
    pub mu: Vec<T>,
    /// `S_-/G + ξ·S_+/G - (π_old/η)(log r + κ)` per token.
    pub stationarity: Vec<T>,
    /// `log r + κ - η(S_- + ξ·S_+)/(G·π_old)` per token.
    pub log_stationarity: Vec<T>,
    /// `|Σ π_old·r - 1|`
    pub normalization_error: T,
    pub iterations: usize,
}

impl<T: Real> KktSolution<T> {
    pub fn max_stationarity(&self) -> T {
        self.stationarity.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn any_capped(&self) -> bool {
        self.branch.iter().any(|b| *b != Branch::Unclipped)
    }

    pub fn max_ratio(&self) -> T {
        self.ratios.iter().copied().fold(T::zero(), T::max)
    }
}

/// Clipped update for single-step rollouts.
pub fn clipped_update<T: Real>(
    pi_old: &Policy<T>,
    rollouts: &RolloutGroup,
    adv: &AdvantageGroup<T>,
    eta: T,
    eps: T,
) -> Result<(Policy<T>, KktSolution<T>)> {
    if rollouts.rollout_length() != 1 {
        return Err(Error::Shape("clipped update needs single-step rollouts (L = 1)".into()));
    }
    let mass = SignedMass::from_group(rollouts, adv, pi_old.len())?;
    clipped_update_mass(pi_old, &mass, eta, eps, &KktOptions::default())
}

struct Coeffs<T> {
    c0: Vec<T>,
    c1: Vec<T>,
    log_cap: T,
    cap: T,
}

impl<T: Real> Coeffs<T> {
    fn branch(&self, a: usize, kappa: T) -> Branch {
        if self.c1[a] - kappa <= self.log_cap {
            Branch::Unclipped
        } else if self.c0[a] - kappa >= self.log_cap {
            Branch::AboveCap
        } else {
            Branch::Kink
        }
    }

    fn ratio(&self, a: usize, kappa: T, b: Branch) -> T {
        match b {
            Branch::Unclipped => (self.c1[a] - kappa).exp(),
            Branch::AboveCap => (self.c0[a] - kappa).exp(),
            Branch::Kink => self.cap,
        }
    }

    fn normalization(&self, pi: &[T], kappa: T) -> T {
        (0..pi.len()).map(|a| pi[a] * self.ratio(a, kappa, self.branch(a, kappa))).sum()
    }

    /// Exact `κ` for a fixed branch assignment, if it exists.
    fn polish(&self, pi: &[T], branches: &[Branch]) -> Option<T> {
        let kink_mass: T = (0..pi.len()).filter(|&a| branches[a] == Branch::Kink).map(|a| pi[a]).sum();
        let rest = T::one() - self.cap * kink_mass;
        if !(rest > T::zero()) {
            return None;
        }
        let logits: Vec<T> = (0..pi.len())
            .filter(|&a| branches[a] != Branch::Kink)
            .map(|a| pi[a].ln() + if branches[a] == Branch::Unclipped { self.c1[a] } else { self.c0[a] })
            .collect();
        if logits.is_empty() {
            return None;
        }
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
        Some(lse - rest.ln())
    }
}

/// Clipped update from per-token signed advantage masses (already divided by G,
/// possibly averaged over several groups).
pub fn clipped_update_mass<T: Real>(
    pi_old: &Policy<T>,
    mass: &SignedMass<T>,
    eta: T,
    eps: T,
    opts: &KktOptions<T>,
) -> Result<(Policy<T>, KktSolution<T>)> {
    let n = pi_old.len();
    if mass.len() != n {
        return Err(Error::Shape(format!("policy has {n} entries, masses have {}", mass.len())));
    }
    let pi = pi_old.probs();
    let cap = T::one() + eps;
    let co = Coeffs {
        c0: (0..n).map(|a| eta * mass.minus[a] / pi[a]).collect(),
        c1: (0..n).map(|a| eta * (mass.minus[a] + mass.plus[a]) / pi[a]).collect(),
        log_cap: cap.ln(),
        cap,
    };

    let (mut lo, mut hi) =
        (co.c0.iter().copied().fold(T::infinity(), T::min), co.c1.iter().copied().fold(T::neg_infinity(), T::max));
    // N(lo) ≥ 1 ≥ N(hi): at κ = min c0 every ratio is ≥ 1, at κ = max c1 every ratio is ≤ 1.
    if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo.abs().max(hi.abs()) > T::lit(1e6) {
        return Err(Error::BracketNotFound { lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
    }

    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if co.normalization(pi, mid) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut kappa = lo + (hi - lo) / T::lit(2.0);
    let mut branches: Vec<Branch> = (0..n).map(|a| co.branch(a, kappa)).collect();
    if let Some(k) = co.polish(pi, &branches) {
        let again: Vec<Branch> = (0..n).map(|a| co.branch(a, k)).collect();
        let err_old = (co.normalization(pi, kappa) - T::one()).abs();
        let err_new = (co.normalization(pi, k) - T::one()).abs();
        if again == branches && err_new <= err_old {
            kappa = k;
            branches = again;
        }
    }

    let ratios: Vec<T> = (0..n).map(|a| co.ratio(a, kappa, branches[a])).collect();
    let total: T = pi.iter().zip(&ratios).map(|(&p, &r)| p * r).sum();
    let normalization_error = (total - T::one()).abs();
    if !(normalization_error <= opts.normalization_tol) {
        return Err(Error::NoConvergence { iterations, residual: normalization_error.to_f64_lossy() });
    }

    let mut xi = Vec::with_capacity(n);
    let mut stationarity = Vec::with_capacity(n);
    let mut log_stationarity = Vec::with_capacity(n);
    for a in 0..n {
        let x = match branches[a] {
            Branch::Unclipped => T::one(),
            Branch::AboveCap => T::zero(),
            Branch::Kink => {
                let raw = (pi[a] / eta * (co.log_cap + kappa) - mass.minus[a]) / mass.plus[a];
                raw.max(T::zero()).min(T::one())
            }
        };
        let lr = ratios[a].ln();
        let drive = mass.minus[a] + mass.plus[a] * x;
        let st = if eta > T::zero() { drive - pi[a] / eta * (lr + kappa) } else { T::zero() };
        xi.push(x);
        stationarity.push(st);
        log_stationarity.push(lr + kappa - eta * drive / pi[a]);
    }
    let policy = Policy::from_raw(pi.iter().zip(&ratios).map(|(&p, &r)| p * r).collect());
    let lambda = (kappa - T::one()) / eta;
    Ok((
        policy,
        KktSolution {
            ratios,
            kappa,
            lambda,
            branch: branches,
            xi,
            mu: vec![T::zero(); n],
            stationarity,
            log_stationarity,
            normalization_error,
            iterations,
        },
    ))
}

/// Projects the unclipped ratios onto the cap (`min{r, 1+ε}`) and renormalizes.
/// A feasible comparison point for the clipped maximizer.
pub fn clip_projected<T: Real>(pi_old: &Policy<T>, pi_unclipped: &Policy<T>, eps: T) -> Policy<T> {
    let cap = T::one() + eps;
    let w: Vec<T> = pi_old.probs().iter().zip(pi_unclipped.probs()).map(|(&q, &p)| q * (p / q).min(cap)).collect();
    let z: T = w.iter().copied().sum();
    Policy::from_raw(w.into_iter().map(|v| v / z).collect())
}
