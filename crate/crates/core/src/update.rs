//! Unclipped exponentiated update, surrogate objectives and the log-ratio expansion.

use crate::advantage::{AdvantageGroup, RolloutGroup, SignedMass, TokenAdvantage};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

fn check_len<T: Real>(pi: &Policy<T>, n: usize) -> Result<()> {
    if pi.len() != n {
        return Err(Error::Shape(format!("policy has {} entries, advantage has {n}", pi.len())));
    }
    Ok(())
}

/// `log Σ_a π(a)·exp(x_a)`, accurate both for tiny and for large `x`.
pub(crate) fn log_partition<T: Real>(pi: &[T], x: &[T]) -> T {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let min = x.iter().copied().fold(T::infinity(), T::min);
    if max.abs().max(min.abs()) < T::lit(0.5) {
        let mass: T = pi.iter().copied().sum();
        let s: T = pi.iter().zip(x).map(|(&p, &v)| p * v.exp_m1()).sum();
        (s + (mass - T::one())).ln_1p()
    } else {
        let s: T = pi.iter().zip(x).map(|(&p, &v)| p * (v - max).exp()).sum();
        max + s.ln()
    }
}

/// `π_new(a) ∝ π_old(a)·exp(η·Ã(a))`.
pub fn exp_update<T: Real>(pi_old: &Policy<T>, adv: &TokenAdvantage<T>, eta: T) -> Result<Policy<T>> {
    check_len(pi_old, adv.values.len())?;
    let x: Vec<T> = adv.values.iter().map(|&a| eta * a).collect();
    if x.iter().all(|&v| v == T::zero()) {
        return Ok(pi_old.clone());
    }
    let spread = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if !spread.is_finite() {
        return Err(Error::UpdateOverflow { spread: spread.to_f64_lossy() });
    }
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = pi_old.probs().iter().zip(&x).map(|(&p, &v)| p * (v - max).exp()).collect();
    let z: T = w.iter().copied().sum();
    let out: Vec<T> = w.into_iter().map(|v| v / z).collect();
    if out.iter().any(|&p| !(p > T::zero() && p.is_finite())) {
        return Err(Error::UpdateOverflow { spread: spread.to_f64_lossy() });
    }
    Ok(Policy::from_raw(out))
}

/// `log(π_new/π_old)` of [`exp_update`] computed without forming `π_new`.
pub fn exp_update_log_ratios<T: Real>(pi_old: &Policy<T>, adv: &TokenAdvantage<T>, eta: T) -> Result<Vec<T>> {
    check_len(pi_old, adv.values.len())?;
    let x: Vec<T> = adv.values.iter().map(|&a| eta * a).collect();
    let log_z = log_partition(pi_old.probs(), &x);
    if !log_z.is_finite() {
        return Err(Error::UpdateOverflow { spread: x.iter().fold(0.0, |m, v| m.max(v.abs().to_f64_lossy())) });
    }
    Ok(x.into_iter().map(|v| v - log_z).collect())
}

/// Elementwise `π_new/π_old`.
pub fn importance_ratios<T: Real>(pi_new: &Policy<T>, pi_old: &Policy<T>) -> Result<Vec<T>> {
    check_len(pi_old, pi_new.len())?;
    Ok(pi_new.probs().iter().zip(pi_old.probs()).map(|(&a, &b)| a / b).collect())
}

/// Upper-clipped surrogate `Σ_a [S_-(a)/G·r(a) + S_+(a)/G·min{r(a), 1+ε}]`.
pub fn surrogate_from_mass<T: Real>(ratios: &[T], mass: &SignedMass<T>, eps: T) -> T {
    let cap = T::one() + eps;
    ratios.iter().zip(mass.minus.iter().zip(&mass.plus)).map(|(&r, (&m, &p))| m * r + p * r.min(cap)).sum()
}

/// Upper-clipped surrogate of `π` relative to `π_old` for single-step rollouts.
pub fn surrogate_value<T: Real>(
    pi: &Policy<T>,
    pi_old: &Policy<T>,
    rollouts: &RolloutGroup,
    adv: &AdvantageGroup<T>,
    eps: T,
) -> Result<T> {
    let mass = SignedMass::from_group(rollouts, adv, pi_old.len())?;
    let r = importance_ratios(pi, pi_old)?;
    Ok(surrogate_from_mass(&r, &mass, eps))
}

/// Two-sided PPO surrogate `(1/n)·Σ min{r·A, clip(r, 1-ε, 1+ε)·A}` over sampled tokens.
/// Diagnostic only; the updates model upper clipping alone.
pub fn ppo_surrogate<T: Real>(ratios: &[T], advantages: &[T], eps: T) -> Result<T> {
    if ratios.len() != advantages.len() || ratios.is_empty() {
        return Err(Error::Shape(format!("{} ratios for {} advantages", ratios.len(), advantages.len())));
    }
    let (lo, hi) = (T::one() - eps, T::one() + eps);
    let s: T = ratios.iter().zip(advantages).map(|(&r, &a)| (r * a).min(r.max(lo).min(hi) * a)).sum();
    Ok(s / T::from_usize_lossy(ratios.len()))
}

/// `KL(π‖π_old) = Σ π log(π/π_old)`.
pub fn kl_divergence<T: Real>(pi: &Policy<T>, pi_old: &Policy<T>) -> T {
    pi.probs().iter().zip(pi_old.probs()).map(|(&p, &q)| if p > T::zero() { p * (p / q).ln() } else { T::zero() }).sum()
}

/// `F(π) = Ĵ(π) - KL(π‖π_old)/η`, maximized by the clipped update.
pub fn penalized_objective<T: Real>(pi: &Policy<T>, pi_old: &Policy<T>, mass: &SignedMass<T>, eta: T, eps: T) -> T {
    let r: Vec<T> = pi.probs().iter().zip(pi_old.probs()).map(|(&a, &b)| a / b).collect();
    surrogate_from_mass(&r, mass, eps) - kl_divergence(pi, pi_old) / eta
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRatioReport<T = f64> {
    /// `|log r(a) - η(Ã(a) - μ) + η²σ²/2|` per token.
    pub residuals: Vec<T>,
    pub max_residual: T,
    /// `C·η³`
    pub bound: T,
    /// `C = 1/(36√3·π_min³)`
    pub constant: T,
    pub mu: T,
    pub sigma2: T,
    pub holds: bool,
}

/// Second-order expansion check of the log importance ratio. `μ` and `σ²`
/// are the realized mean and variance of Ã under `π_old`, or `(0, 1)` when
/// `standardized` is set.
pub fn log_ratio_residual<T: Real>(
    pi_old: &Policy<T>,
    adv: &TokenAdvantage<T>,
    eta: T,
    pi_min: T,
    standardized: bool,
) -> Result<LogRatioReport<T>> {
    let log_r = exp_update_log_ratios(pi_old, adv, eta)?;
    let (mu, sigma2) = if standardized {
        (T::zero(), T::one())
    } else {
        let mu: T = pi_old.probs().iter().zip(&adv.values).map(|(&p, &a)| p * a).sum();
        let var: T = pi_old.probs().iter().zip(&adv.values).map(|(&p, &a)| p * (a - mu) * (a - mu)).sum();
        (mu, var)
    };
    let half = T::lit(0.5);
    let residuals: Vec<T> = log_r
        .iter()
        .zip(&adv.values)
        .map(|(&lr, &a)| (lr - eta * (a - mu) + half * eta * eta * sigma2).abs())
        .collect();
    let max_residual = residuals.iter().copied().fold(T::zero(), T::max);
    let constant = T::one() / (T::lit(36.0) * T::lit(3.0).sqrt() * pi_min.powi(3));
    let bound = constant * eta.powi(3);
    Ok(LogRatioReport { residuals, max_residual, bound, constant, mu, sigma2, holds: max_residual <= bound })
}
