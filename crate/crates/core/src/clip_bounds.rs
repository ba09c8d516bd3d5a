//! Clipping-correction bound, raw-surrogate lower bound and their ratio.

use crate::advantage::{advantage_moments, compute_advantages, sample_rollouts, token_advantage, RewardGroup};
use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::policy::Policy;
use crate::scalar::Real;
use crate::stats::{par_trials, McEstimate};
use crate::update::{exp_update, importance_ratios};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `φ(u) = u·log u - u + 1`, with `φ(0) = 1`.
pub fn phi_fn<T: Real>(u: T) -> T {
    if u == T::zero() {
        T::one()
    } else {
        u * u.ln() - u + T::one()
    }
}

/// Convention for the advantage-magnitude constant `M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Magnitude<T = f64> {
    /// `√(G-1)`, the tight bound under the population std.
    SqrtGMinusOne,
    /// `√G - 1/√G` (3.75 at G = 16).
    SampleStd,
    Explicit(T),
}

impl<T: Real> Magnitude<T> {
    pub fn value(&self, group_size: usize) -> T {
        let g = T::from_usize_lossy(group_size);
        match *self {
            Magnitude::SqrtGMinusOne => (g - T::one()).sqrt(),
            Magnitude::SampleStd => g.sqrt() - T::one() / g.sqrt(),
            Magnitude::Explicit(m) => m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipBoundInputs<T = f64> {
    pub params: HyperParams<T>,
    /// Token-level activation rate `p_+`.
    pub activation_rate: T,
    pub mean_abs_advantage: T,
    pub magnitude: T,
}

impl<T: Real> ClipBoundInputs<T> {
    pub fn new(params: HyperParams<T>, activation_rate: T, mean_abs_advantage: T, magnitude: T) -> Result<Self> {
        if !(activation_rate >= T::zero() && activation_rate <= T::one()) {
            return Err(Error::param("activation_rate", format!("0 ≤ p_+ ≤ 1 required, got {activation_rate}")));
        }
        if !(mean_abs_advantage >= T::zero()) {
            return Err(Error::param("mean_abs_advantage", "E|A| ≥ 0 required"));
        }
        if mean_abs_advantage > magnitude {
            return Err(Error::param("magnitude", format!("E|A| = {mean_abs_advantage} exceeds M = {magnitude}")));
        }
        Ok(Self { params, activation_rate, mean_abs_advantage, magnitude })
    }

    fn r_max(&self) -> T {
        (self.params.step_size() / self.params.policy_floor()).exp()
    }
}

/// Which argument of `min{√p_+, φ(R)/φ(1+ε)}` was smaller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinBranch {
    SqrtActivation,
    PhiRatio,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipCorrection<T = f64> {
    pub first_term: T,
    pub second_term: T,
    pub min_branch: MinBranch,
    pub bound: T,
}

/// `M·√(2·p_+·L·R·φ(R)) + M·L·Δ_+·min{√p_+, φ(R)/φ(1+ε)}`.
pub fn clip_correction<T: Real>(inp: &ClipBoundInputs<T>) -> ClipCorrection<T> {
    let r = inp.r_max();
    let l = T::from_usize_lossy(inp.params.rollout_length());
    let m = inp.magnitude;
    let p = inp.activation_rate;
    let cap = T::one() + inp.params.clip_ratio();
    let delta_plus = (r - cap).max(T::zero());
    let first_term = m * (T::lit(2.0) * p * l * r * phi_fn(r)).sqrt();
    let sqrt_p = p.sqrt();
    let phi_ratio = phi_fn(r) / phi_fn(cap);
    let (min_branch, min_val) =
        if sqrt_p <= phi_ratio { (MinBranch::SqrtActivation, sqrt_p) } else { (MinBranch::PhiRatio, phi_ratio) };
    let second_term = m * l * delta_plus * min_val;
    ClipCorrection { first_term, second_term, min_branch, bound: first_term + second_term }
}

pub fn clip_correction_bound<T: Real>(inp: &ClipBoundInputs<T>) -> T {
    clip_correction(inp).bound
}

/// `C = 1/(8·π_min²)`.
pub fn raw_constant<T: Real>(params: &HyperParams<T>) -> T {
    T::one() / (T::lit(8.0) * params.policy_floor() * params.policy_floor())
}

/// `L·E|A|·(1 - C·η²)`, floored at zero.
pub fn raw_surrogate_lower_bound<T: Real>(inp: &ClipBoundInputs<T>) -> T {
    let eta = inp.params.step_size();
    let l = T::from_usize_lossy(inp.params.rollout_length());
    (l * inp.mean_abs_advantage * (T::one() - raw_constant(&inp.params) * eta * eta)).max(T::zero())
}

/// Lower bound over clip bound; `+∞` when the clip bound is zero.
pub fn signal_ratio<T: Real>(inp: &ClipBoundInputs<T>) -> T {
    let l = T::from_usize_lossy(inp.params.rollout_length());
    // Both sides per token.
    let den = clip_correction_bound(inp) / l;
    if den == T::zero() {
        T::infinity()
    } else {
        raw_surrogate_lower_bound(inp) / l / den
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallEtaConstants<T = f64> {
    /// `M·√(2e)/π_min`
    pub c1: T,
    /// `M·(e - 1)/π_min`
    pub c2: T,
    /// `M·(e - 1)/(φ(1+ε)·π_min³)`
    pub c3: T,
}

pub fn small_eta_constants<T: Real>(params: &HyperParams<T>, magnitude: T) -> SmallEtaConstants<T> {
    let e = T::E();
    let pm = params.policy_floor();
    let phi_cap = phi_fn(T::one() + params.clip_ratio());
    SmallEtaConstants {
        c1: magnitude * (T::lit(2.0) * e).sqrt() / pm,
        c2: magnitude * (e - T::one()) / pm,
        c3: magnitude * (e - T::one()) / (phi_cap * pm * pm * pm),
    }
}

impl<T: Real> SmallEtaConstants<T> {
    /// `c1·η·√L + min{c2·η·√p_+·L, c3·η³·L}`, valid for `η ≤ π_min`.
    pub fn envelope(&self, eta: T, rollout_length: usize, activation_rate: T) -> T {
        let l = T::from_usize_lossy(rollout_length);
        self.c1 * eta * l.sqrt() + (self.c2 * eta * activation_rate.sqrt() * l).min(self.c3 * eta * eta * eta * l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipBoundReport<T = f64> {
    pub r_max: T,
    pub phi_r: T,
    pub phi_cap: T,
    pub delta_plus: T,
    pub correction: ClipCorrection<T>,
    pub bound_ctot: T,
    /// `C = 1/(8π_min²)`
    pub raw_constant: T,
    pub lower_nraw: T,
    pub ratio: T,
    pub mean_abs_advantage: T,
    pub magnitude: T,
    pub small_eta: SmallEtaConstants<T>,
}

pub fn clip_bound_report<T: Real>(inp: &ClipBoundInputs<T>) -> ClipBoundReport<T> {
    let r = inp.r_max();
    let cap = T::one() + inp.params.clip_ratio();
    let correction = clip_correction(inp);
    ClipBoundReport {
        r_max: r,
        phi_r: phi_fn(r),
        phi_cap: phi_fn(cap),
        delta_plus: (r - cap).max(T::zero()),
        correction,
        bound_ctot: correction.bound,
        raw_constant: raw_constant(&inp.params),
        lower_nraw: raw_surrogate_lower_bound(inp),
        ratio: signal_ratio(inp),
        mean_abs_advantage: inp.mean_abs_advantage,
        magnitude: inp.magnitude,
        small_eta: small_eta_constants(&inp.params, inp.magnitude),
    }
}

/// `E|A|` for group size G from the exact moments.
pub fn mean_abs_advantage(group_size: usize) -> Result<f64> {
    Ok(advantage_moments(group_size)?.abs1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipMcReport {
    /// `E|C_tot^+|` per rollout.
    pub ctot: McEstimate,
    /// `E|N_raw|` per rollout.
    pub nraw: McEstimate,
    /// Fraction of tokens with `A > 0` and `r > 1+ε`.
    pub activation: McEstimate,
    /// `E|A|` over the sampled rollouts.
    pub mean_abs_advantage: McEstimate,
}

/// Monte Carlo estimates of the clipping correction and the raw surrogate
/// under the unclipped update, context-free sequence mode.
pub fn mc_clip_estimate(pi: &Policy<f64>, params: &HyperParams<f64>, trials: u64, seed: u64) -> Result<ClipMcReport> {
    if pi.len() != params.vocab_size() {
        return Err(Error::Shape(format!("policy has {} entries, |V| = {}", pi.len(), params.vocab_size())));
    }
    let g = params.group_size();
    let l = params.rollout_length();
    let cap = 1.0 + params.clip_ratio();
    let eta = params.step_size();
    let [ctot, nraw, act, abs_a] = par_trials(trials, seed, |_, rng| {
        let rollouts = sample_rollouts(pi, g, l, rng);
        let rewards = RewardGroup::from_mask(rng.gen::<u64>(), g);
        let adv = compute_advantages::<f64>(&rewards);
        let at = token_advantage(&rollouts, &adv, pi).expect("shapes checked");
        let ratios = match exp_update(pi, &at, eta) {
            Ok(p) => importance_ratios(&p, pi).expect("shapes checked"),
            Err(_) => return [f64::NAN; 4],
        };
        let (mut c_sum, mut n_sum, mut hits, mut a_sum) = (0.0, 0.0, 0.0, 0.0);
        for (i, &a) in adv.advantages.iter().enumerate() {
            let (mut c, mut n) = (0.0, 0.0);
            for &tok in rollouts.row(i) {
                let r = ratios[tok];
                n += r * a;
                if a > 0.0 && r > cap {
                    c += (cap - r) * a;
                    hits += 1.0;
                }
            }
            c_sum += c.abs();
            n_sum += n.abs();
            a_sum += a.abs();
        }
        let gf = g as f64;
        [c_sum / gf, n_sum / gf, hits / (gf * l as f64), a_sum / gf]
    });
    Ok(ClipMcReport {
        ctot: ctot.estimate(),
        nraw: nraw.estimate(),
        activation: act.estimate(),
        mean_abs_advantage: abs_a.estimate(),
    })
}
