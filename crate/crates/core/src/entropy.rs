//! Entropy functionals, one-step entropy predictions and their supporting bounds.

use crate::advantage::{advantage_moments, categorical, compute_advantages, AdvantageGroup, RewardGroup, SignedMass};
use crate::enumerate::par_fold;
use crate::error::{Error, Result};
use crate::kkt::{clipped_update_mass, KktOptions};
use crate::params::HyperParams;
use crate::policy::Policy;
use crate::scalar::{binomial, Real};
use crate::stats::{par_trials, McEstimate};
use crate::update::exp_update;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shannon entropy in nats.
pub fn entropy<T: Real>(pi: &Policy<T>) -> T {
    -pi.probs().iter().map(|&p| if p > T::zero() { p * p.ln() } else { T::zero() }).sum::<T>()
}

/// `Φ(π) = |V| - 1 + Σ log π(a) - |V|·Σ π(a) log π(a)`.
pub fn skewness_phi<T: Real>(pi: &Policy<T>) -> T {
    let v = T::from_usize_lossy(pi.len());
    let sum_log: T = pi.probs().iter().map(|p| p.ln()).sum();
    let mean_log: T = pi.probs().iter().map(|&p| p * p.ln()).sum();
    v - T::one() + sum_log - v * mean_log
}

/// Two-arm closed form `1 + (1 - 2β)·log(β/(1 - β))`.
pub fn two_arm_phi<T: Real>(beta: T) -> T {
    T::one() + (T::one() - T::lit(2.0) * beta) * (beta / (T::one() - beta)).ln()
}

/// `c_G = (1 - 2^{1-G})/(2G)`.
pub fn leading_coefficient<T: Real>(group_size: usize) -> T {
    let g = T::from_usize_lossy(group_size);
    (T::one() - T::lit(2.0).powi(1 - group_size as i32)) / (T::lit(2.0) * g)
}

/// `(S_1, S_2)` evaluated at floor `π`.
pub fn s1_s2<T: Real>(vocab_size: usize, floor: T) -> Result<(T, T)> {
    let v1 = T::from_usize_lossy(vocab_size - 1);
    let rest = T::one() - v1 * floor;
    if !(rest > T::zero() && floor > T::zero()) {
        return Err(Error::param("policy_floor", "π_min·(|V|-1) < 1 required for S1, S2"));
    }
    Ok((v1 / floor + T::one() / rest, v1 / (floor * floor) + T::one() / (rest * rest)))
}

/// Fourth moment of Ã under random rewards, with `sum_inv = Σ1/π`
/// and `sum_inv2 = Σ1/π²` (or their worst cases `S_1`, `S_2`).
pub fn fourth_moment_expr<T: Real>(group_size: usize, vocab_size: usize, sum_inv: T, sum_inv2: T) -> Result<T> {
    let m = advantage_moments(group_size)?;
    let g = T::from_usize_lossy(group_size);
    let v = T::from_usize_lossy(vocab_size);
    let a4 = T::lit(m.fourth);
    let a22 = T::lit(m.cross22);
    let g3 = g * g * g;
    Ok(a4 / g3 * (sum_inv2 - T::lit(7.0) * sum_inv + T::lit(12.0) * v - T::lit(6.0))
        + T::lit(3.0) * (a4 + (g - T::one()) * a22) / g3 * (sum_inv - T::lit(2.0) * v + T::one()))
}

/// Worst-case fourth moment `E[E_π Ã⁴]` over policies with floor `floor`.
pub fn fourth_moment_bound<T: Real>(group_size: usize, vocab_size: usize, floor: T) -> Result<T> {
    let (s1, s2) = s1_s2(vocab_size, floor)?;
    fourth_moment_expr(group_size, vocab_size, s1, s2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtildeMoments<T = f64> {
    /// `E[Var_π Ã] = (1 - 2^{1-G})(|V| - 1)/G`
    pub e_var: T,
    /// `E[Cov_π(log π, Ã)]`-type term `((1 - 2^{1-G})/G)(Σ log π - |V|·E_π log π)`
    pub e_cov_log: T,
    /// Bound on `E[E_π Ã⁴]` with `S_1`, `S_2`.
    pub e_fourth_bound: T,
    /// Same expression with the policy's own `Σ1/π`, `Σ1/π²`; exact.
    pub e_fourth_exact: T,
    pub s1: T,
    pub s2: T,
}

pub fn atilde_moment_formulas<T: Real>(params: &HyperParams<T>, pi: &Policy<T>) -> Result<AtildeMoments<T>> {
    let g = params.group_size();
    let v = pi.len();
    let factor = T::one() - T::lit(2.0).powi(1 - g as i32);
    let gf = T::from_usize_lossy(g);
    let vf = T::from_usize_lossy(v);
    let sum_log: T = pi.probs().iter().map(|p| p.ln()).sum();
    let mean_log: T = pi.probs().iter().map(|&p| p * p.ln()).sum();
    let (s1, s2) = s1_s2(v, params.policy_floor())?;
    let sum_inv: T = pi.probs().iter().map(|&p| p.recip()).sum();
    let sum_inv2: T = pi.probs().iter().map(|&p| (p * p).recip()).sum();
    Ok(AtildeMoments {
        e_var: factor * (vf - T::one()) / gf,
        e_cov_log: factor / gf * (sum_log - vf * mean_log),
        e_fourth_bound: fourth_moment_expr(g, v, s1, s2)?,
        e_fourth_exact: fourth_moment_expr(g, v, sum_inv, sum_inv2)?,
        s1,
        s2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemainderConvention {
    /// `e^{η/(2π)}/24·(192 + 176·log(1/π_min) + 176·η/π)·m4·η⁴`, `m4` fixed.
    Lemma,
    /// `e^{η/(2π)}/24·(192 + 176·log(1/π) + 176·η/(2π))·m4(π)·η⁴`, `m4` at level `π`.
    Remark,
}

/// Taylor remainder constant at probability level `pi`.
pub fn remainder_constant<T: Real>(pi: T, pi_min: T, eta: T, fourth: T, convention: RemainderConvention) -> T {
    let c176 = T::lit(176.0);
    let (log_term, eta_term) = match convention {
        RemainderConvention::Lemma => ((T::one() / pi_min).ln(), eta / pi),
        RemainderConvention::Remark => ((T::one() / pi).ln(), eta / (T::lit(2.0) * pi)),
    };
    (eta / (T::lit(2.0) * pi)).exp() / T::lit(24.0)
        * (T::lit(192.0) + c176 * log_term + c176 * eta_term)
        * fourth
        * eta.powi(4)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderInputs<T = f64> {
    pub pi_hat: T,
    pub pi_min: T,
    pub eta: T,
    /// Fourth moment used with `pi_hat`.
    pub fourth_hat: T,
    /// Fourth moment used with `pi_min`.
    pub fourth_min: T,
    /// Collision probability `q`; enables the mixed form.
    pub collision: Option<T>,
    pub convention: RemainderConvention,
}

impl<T: Real> RemainderInputs<T> {
    /// Mixed-level inputs: each fourth moment is the
    /// `S_1/S_2` bound with the corresponding level as floor, and `q` is the
    /// collision bound.
    pub fn remark(group_size: usize, vocab_size: usize, pi_hat: T, pi_min: T, eta: T) -> Result<Self> {
        Ok(Self {
            pi_hat,
            pi_min,
            eta,
            fourth_hat: fourth_moment_bound(group_size, vocab_size, pi_hat)?,
            fourth_min: fourth_moment_bound(group_size, vocab_size, pi_min)?,
            collision: Some(collision_bound(group_size, vocab_size, pi_hat)),
            convention: RemainderConvention::Remark,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport<T = f64> {
    pub c_hat: T,
    pub c_min: T,
    pub collision: Option<T>,
    pub bound: T,
}

/// `C(π̂)` alone, or `(1 - q)·C(π̂) + q·C(π_min)` when `q` is supplied.
pub fn remainder_bound<T: Real>(inp: &RemainderInputs<T>) -> Result<RemainderReport<T>> {
    if !(inp.pi_min > T::zero() && inp.pi_min <= inp.pi_hat && inp.pi_hat < T::one()) {
        return Err(Error::param("pi_hat", "π_min ≤ π̂ < 1 required"));
    }
    let c_hat = remainder_constant(inp.pi_hat, inp.pi_min, inp.eta, inp.fourth_hat, inp.convention);
    let c_min = remainder_constant(inp.pi_min, inp.pi_min, inp.eta, inp.fourth_min, inp.convention);
    let bound = match inp.collision {
        Some(q) => (T::one() - q) * c_hat + q * c_min,
        None => c_hat,
    };
    Ok(RemainderReport { c_hat, c_min, collision: inp.collision, bound })
}

/// `C(G,2)·|V|·π̂²`.
pub fn collision_bound<T: Real>(group_size: usize, vocab_size: usize, pi_hat: T) -> T {
    T::lit(binomial(group_size as u32, 2) as f64) * T::from_usize_lossy(vocab_size) * pi_hat * pi_hat
}

/// Probability that two of G rollouts land on the same token of probability ≤ π̂.
pub fn collision_frequency_mc(pi: &Policy<f64>, group_size: usize, pi_hat: f64, trials: u64, seed: u64) -> McEstimate {
    let [m] = par_trials(trials, seed, |_, rng| {
        let mut seen = vec![false; pi.len()];
        let mut hit = false;
        for _ in 0..group_size {
            let y = categorical(pi.probs(), rng.gen::<f64>());
            if pi.probs()[y] <= pi_hat && seen[y] {
                hit = true;
            }
            seen[y] = true;
        }
        [hit as u8 as f64]
    });
    m.estimate()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapPredicate<T = f64> {
    pub holds: bool,
    /// `(1+ε)η/2`
    pub lhs: T,
    /// `(M_0 - √(η(1+ε))/2)·log(1+ε)`
    pub rhs: T,
    /// `M_0 = (|V| - G)·π_min`
    pub m0: T,
}

/// Sufficient condition under which the cap never binds.
pub fn cap_inactive_predicate<T: Real>(params: &HyperParams<T>) -> CapPredicate<T> {
    let cap = T::one() + params.clip_ratio();
    let eta = params.step_size();
    let free = params.vocab_size() as f64 - params.group_size() as f64;
    let m0 = T::lit(free) * params.policy_floor();
    let lhs = cap * eta / T::lit(2.0);
    let rhs = (m0 - (eta * cap).sqrt() / T::lit(2.0)) * cap.ln();
    CapPredicate { holds: lhs < rhs, lhs, rhs, m0 }
}

/// Measured inputs of the clipped entropy bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClippedEntropyParams<T = f64> {
    /// Probability of `{A_i > 0, r > 1+ε}`.
    pub rho: T,
    /// Mean overshoot `E[r - (1+ε) | event]`.
    pub delta: T,
    /// Threshold `p ∈ (π_min, 1)`.
    pub p: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClippedTerms<T = f64> {
    /// `e^{η/(2π_min)} - (1+ε)`
    pub x_max: T,
    /// `[e^{η/(2p)} - (1+ε)]_+`
    pub m_p: T,
    /// `X_max·(δ - M(p))_+/(X_max - M(p))`
    pub delta_eff: T,
    /// `-π_min·(log(p·e^{η/(2π_min)}))_-`
    pub c_p: T,
    /// `c(p)·G·(ρ·δ_eff - (X_max/2)(G-1)·p)`
    pub term: T,
}

pub fn clipped_terms<T: Real>(params: &HyperParams<T>, cp: &ClippedEntropyParams<T>) -> Result<ClippedTerms<T>> {
    let pi_min = params.policy_floor();
    if !(cp.p > pi_min && cp.p < T::one()) {
        return Err(Error::ThresholdOutOfRange { p: cp.p.to_f64_lossy(), pi_min: pi_min.to_f64_lossy() });
    }
    if !(cp.rho >= T::zero() && cp.rho <= T::one()) {
        return Err(Error::param("rho", "0 ≤ ρ ≤ 1 required"));
    }
    let eta = params.step_size();
    let cap = T::one() + params.clip_ratio();
    let two = T::lit(2.0);
    let g = params.g();
    let x_max = (eta / (two * pi_min)).exp() - cap;
    let m_p = ((eta / (two * cp.p)).exp() - cap).max(T::zero());
    let delta_eff = if x_max > m_p { x_max * (cp.delta - m_p).max(T::zero()) / (x_max - m_p) } else { T::zero() };
    let log_arg = (cp.p * (eta / (two * pi_min)).exp()).ln();
    let c_p = -pi_min * (-log_arg).max(T::zero());
    let term = c_p * g * (cp.rho * delta_eff - x_max / two * (g - T::one()) * cp.p);
    Ok(ClippedTerms { x_max, m_p, delta_eff, c_p, term })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClippedBoundReport<T = f64> {
    pub phi: T,
    /// `-c_G·Φ·η²`
    pub leading: T,
    pub remainder: T,
    pub clipped: ClippedTerms<T>,
    /// Upper bound on `E[ΔH]` under the clipped update.
    pub total: T,
}

/// Full upper bound `-c_G·Φ·η² + remainder + clipped term` for a given `Φ`.
pub fn clipped_entropy_bound<T: Real>(
    phi: T,
    params: &HyperParams<T>,
    remainder: T,
    cp: &ClippedEntropyParams<T>,
) -> Result<ClippedBoundReport<T>> {
    let eta = params.step_size();
    let leading = -leading_coefficient::<T>(params.group_size()) * phi * eta * eta;
    let clipped = clipped_terms(params, cp)?;
    Ok(ClippedBoundReport { phi, leading, remainder, clipped, total: leading + remainder + clipped.term })
}

/// Measured against predicted one-step entropy change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyStepReport<T = f64> {
    pub delta_measured: Option<T>,
    /// `-c_G·Φ(π_old)·η²`
    pub delta_predicted_leading: T,
    pub remainder_budget: T,
    pub clipped_extra_term: Option<T>,
    pub within_budget: Option<bool>,
}

impl<T: Real> EntropyStepReport<T> {
    /// Attaches a measurement. Unclipped: `|ΔH - lead| ≤ budget`. Clipped:
    /// `ΔH ≤ lead + budget + clipped term`.
    pub fn with_measured(mut self, measured: T) -> Self {
        self.delta_measured = Some(measured);
        let ok = match self.clipped_extra_term {
            None => (measured - self.delta_predicted_leading).abs() <= self.remainder_budget,
            Some(c) => measured <= self.delta_predicted_leading + self.remainder_budget + c,
        };
        self.within_budget = Some(ok);
        self
    }
}

fn tabular_budget<T: Real>(pi: &Policy<T>, params: &HyperParams<T>) -> Result<T> {
    let floor = params.policy_floor();
    let fourth = fourth_moment_bound(params.group_size(), pi.len(), floor)?;
    Ok(remainder_constant(floor, floor, params.step_size(), fourth, RemainderConvention::Lemma))
}

/// Leading-order prediction with the `Lemma`-convention remainder budget at the floor.
pub fn predicted_entropy_step_unclipped<T: Real>(
    pi: &Policy<T>,
    params: &HyperParams<T>,
) -> Result<EntropyStepReport<T>> {
    let eta = params.step_size();
    Ok(EntropyStepReport {
        delta_measured: None,
        delta_predicted_leading: -leading_coefficient::<T>(params.group_size()) * skewness_phi(pi) * eta * eta,
        remainder_budget: tabular_budget(pi, params)?,
        clipped_extra_term: None,
        within_budget: None,
    })
}

/// Upper bound on `E[ΔH]` under the clipped update for a concrete policy.
pub fn predicted_entropy_step_clipped_bound<T: Real>(
    pi: &Policy<T>,
    params: &HyperParams<T>,
    cp: &ClippedEntropyParams<T>,
) -> Result<T> {
    let rep = clipped_entropy_bound(skewness_phi(pi), params, tabular_budget(pi, params)?, cp)?;
    Ok(rep.total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateMode {
    Unclipped,
    Clipped,
}

/// Largest `|V|^G·2^G` the exact oracles enumerate.
pub const ORACLE_BUDGET: f64 = (1u64 << 26) as f64;

fn oracle_shape(pi: &Policy<f64>, params: &HyperParams<f64>) -> Result<(usize, usize, u64)> {
    let g = params.group_size();
    let v = pi.len();
    let needed = (v as f64).powi(g as i32) * 2f64.powi(g as i32);
    if needed > ORACLE_BUDGET {
        return Err(Error::BudgetExceeded { what: "entropy-step enumeration", needed, limit: ORACLE_BUDGET });
    }
    Ok((g, v, (v as u64).pow(g as u32)))
}

fn decode_rollouts(mut index: u64, g: usize, v: usize, out: &mut [usize]) {
    for slot in out.iter_mut().take(g) {
        *slot = (index % v as u64) as usize;
        index /= v as u64;
    }
}

fn group_mass(ys: &[usize], adv: &AdvantageGroup<f64>, v: usize) -> SignedMass<f64> {
    let g = ys.len() as f64;
    let mut m = SignedMass::zeros(v);
    for (&y, &a) in ys.iter().zip(&adv.advantages) {
        if a > 0.0 {
            m.plus[y] += a / g;
        } else {
            m.minus[y] += a / g;
        }
    }
    m
}

/// Exact `E[H(π_new) - H(π_old)]` over all rollout assignments and reward vectors.
pub fn exact_entropy_step_oracle(pi: &Policy<f64>, params: &HyperParams<f64>, mode: UpdateMode) -> Result<f64> {
    let (g, v, outer) = oracle_shape(pi, params)?;
    let eta = params.step_size();
    let eps = params.clip_ratio();
    let h0 = entropy(pi);
    let groups: Vec<AdvantageGroup<f64>> =
        (0..1u64 << g).map(|m| compute_advantages(&RewardGroup::from_mask(m, g))).collect();
    let opts = KktOptions::default();
    let (sum, err) = par_fold(
        outer,
        (0.0f64, None::<Error>),
        |(acc, err), idx| {
            if err.is_some() {
                return (acc, err);
            }
            let mut ys = vec![0usize; g];
            decode_rollouts(idx, g, v, &mut ys);
            let w: f64 = ys.iter().map(|&y| pi.probs()[y]).product();
            let mut inner = 0.0;
            for adv in groups.iter().filter(|a| !a.degenerate) {
                let mass = group_mass(&ys, adv, v);
                let next = match mode {
                    UpdateMode::Unclipped => exp_update(pi, &mass.token_advantage(pi), eta),
                    UpdateMode::Clipped => clipped_update_mass(pi, &mass, eta, eps, &opts).map(|(p, _)| p),
                };
                match next {
                    Ok(p) => inner += entropy(&p) - h0,
                    Err(e) => return (acc, Some(e)),
                }
            }
            (acc + w * inner, None)
        },
        |(a, ea), (b, eb)| (a + b, ea.or(eb)),
    );
    match err {
        Some(e) => Err(e),
        None => Ok(sum / 2f64.powi(g as i32)),
    }
}

/// Exact `E[Cov_{y~π}(log π(y), Ã(y))]` under random rewards. Each reward
/// vector is paired with its complement, whose Ã is the exact negation.
pub fn covariance_term_check(pi: &Policy<f64>, params: &HyperParams<f64>) -> Result<f64> {
    let (g, v, outer) = oracle_shape(pi, params)?;
    let full = (1u64 << g) - 1;
    let groups: Vec<AdvantageGroup<f64>> =
        (0..1u64 << g).map(|m| compute_advantages(&RewardGroup::from_mask(m, g))).collect();
    let logs: Vec<f64> = pi.probs().iter().map(|p| p.ln()).collect();
    let mean_log: f64 = pi.probs().iter().zip(&logs).map(|(p, l)| p * l).sum();
    let gf = g as f64;
    let cov = |ys: &[usize], adv: &AdvantageGroup<f64>, at: &mut [f64]| -> f64 {
        at.fill(0.0);
        for (&y, &a) in ys.iter().zip(&adv.advantages) {
            at[y] += a / gf;
        }
        let (mut e_la, mut e_a) = (0.0, 0.0);
        for (a, x) in at.iter_mut().enumerate() {
            *x /= pi.probs()[a];
            e_la += pi.probs()[a] * logs[a] * *x;
            e_a += pi.probs()[a] * *x;
        }
        e_la - mean_log * e_a
    };
    let sum = par_fold(
        outer,
        0.0f64,
        |acc, idx| {
            let mut ys = vec![0usize; g];
            let mut at = vec![0.0; v];
            decode_rollouts(idx, g, v, &mut ys);
            let w: f64 = ys.iter().map(|&y| pi.probs()[y]).product();
            let inner: f64 = (0..1u64 << (g - 1))
                .map(|m| cov(&ys, &groups[m as usize], &mut at) + cov(&ys, &groups[(m ^ full) as usize], &mut at))
                .sum();
            acc + w * inner
        },
        |a, b| a + b,
    );
    Ok(sum / 2f64.powi(g as i32))
}

/// Monte Carlo estimates of `Cov_π(log π, Ã)` and `Var_π(Ã)` over random groups.
pub fn atilde_mc(pi: &Policy<f64>, params: &HyperParams<f64>, trials: u64, seed: u64) -> (McEstimate, McEstimate) {
    let g = params.group_size();
    let v = pi.len();
    let logs: Vec<f64> = pi.probs().iter().map(|p| p.ln()).collect();
    let mean_log: f64 = pi.probs().iter().zip(&logs).map(|(p, l)| p * l).sum();
    let [cov, var] = par_trials(trials, seed, |_, rng| {
        let ys: Vec<usize> = (0..g).map(|_| categorical(pi.probs(), rng.gen::<f64>())).collect();
        let rewards = RewardGroup::from_mask(rng.gen::<u64>(), g);
        let at = group_mass(&ys, &compute_advantages(&rewards), v).token_advantage(pi).values;
        let e_a: f64 = (0..v).map(|a| pi.probs()[a] * at[a]).sum();
        let e_la: f64 = (0..v).map(|a| pi.probs()[a] * logs[a] * at[a]).sum();
        let e_a2: f64 = (0..v).map(|a| pi.probs()[a] * at[a] * at[a]).sum();
        [e_la - mean_log * e_a, e_a2 - e_a * e_a]
    });
    (cov.estimate(), var.estimate())
}
