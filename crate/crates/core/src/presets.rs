//! Bound evaluation bundles and the two reference parameter sets.

use crate::advantage::{advantage_moment_oracle, advantage_moments, MomentKind, MAX_ENUM_GROUP};
use crate::clip_bounds::{clip_bound_report, ClipBoundInputs, ClipBoundReport, Magnitude};
use crate::entropy::{
    cap_inactive_predicate, clipped_entropy_bound, collision_bound, fourth_moment_bound, leading_coefficient,
    remainder_bound, CapPredicate, ClippedBoundReport, ClippedEntropyParams, RemainderConvention, RemainderInputs,
    RemainderReport,
};
use crate::error::Result;
use crate::params::HyperParams;
use serde::{Deserialize, Serialize};

/// Φ_min over the floored simplex at |V| = 150000, π_min = 1e-7 (taken as given).
pub const PHI_MIN_REMARK: f64 = -2.23e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsInputs {
    pub params: HyperParams<f64>,
    pub activation_rate: f64,
    /// `None`: exact `E|A|` for the group size.
    pub mean_abs_advantage: Option<f64>,
    pub magnitude: Magnitude<f64>,
    pub rho: f64,
    pub delta: f64,
    pub threshold_p: f64,
    pub pi_hat: f64,
    /// `None`: `|V| - 1`, the uniform policy's value.
    pub phi: Option<f64>,
    pub remainder_convention: RemainderConvention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub inputs: BoundsInputs,
    pub mean_abs_advantage: f64,
    pub clip: ClipBoundReport<f64>,
    pub leading_coefficient: f64,
    pub remainder: RemainderReport<f64>,
    pub collision_bound: f64,
    pub clipped_entropy: ClippedBoundReport<f64>,
    pub cap_predicate: CapPredicate<f64>,
}

impl BoundsInputs {
    /// `cor34` parameter set: G = 16, η = 5e-7, ε = 0.2, L = 4096,
    /// π_min = 1e-6, p_+ = 0.001, M = √G - 1/√G.
    pub fn cor34() -> Result<Self> {
        let pi_min = 1e-6;
        Ok(Self {
            params: HyperParams::new(16, 5e-7, 0.2, 4096, 150_000, pi_min)?,
            activation_rate: 0.001,
            mean_abs_advantage: None,
            magnitude: Magnitude::SampleStd,
            rho: 0.001,
            delta: 10.0,
            threshold_p: 2.0 * pi_min,
            pi_hat: 2.0 * pi_min,
            phi: None,
            remainder_convention: RemainderConvention::Remark,
        })
    }

    /// `remark-entropy` parameter set: G = 16, η = 5e-7, |V| = 150000,
    /// π_min = 1e-7, ε = 0.2, ρ = 0.001, δ = 10, p = π̂ = 2e-7, Φ = Φ_min.
    pub fn remark_entropy() -> Result<Self> {
        Ok(Self {
            params: HyperParams::new(16, 5e-7, 0.2, 4096, 150_000, 1e-7)?,
            activation_rate: 0.001,
            mean_abs_advantage: None,
            magnitude: Magnitude::SampleStd,
            rho: 0.001,
            delta: 10.0,
            threshold_p: 2e-7,
            pi_hat: 2e-7,
            phi: Some(PHI_MIN_REMARK),
            remainder_convention: RemainderConvention::Remark,
        })
    }
}

/// `E|A|` by the 2^G oracle when affordable, else by the K-sum.
pub fn exact_mean_abs_advantage(group_size: usize) -> Result<f64> {
    if group_size <= MAX_ENUM_GROUP {
        advantage_moment_oracle(group_size, 1, MomentKind::Absolute)
    } else {
        Ok(advantage_moments(group_size)?.abs1)
    }
}

pub fn bounds_report(inputs: &BoundsInputs) -> Result<BoundsReport> {
    let p = &inputs.params;
    let g = p.group_size();
    let v = p.vocab_size();
    let mean_abs = match inputs.mean_abs_advantage {
        Some(x) => x,
        None => exact_mean_abs_advantage(g)?,
    };
    let clip_in = ClipBoundInputs::new(*p, inputs.activation_rate, mean_abs, inputs.magnitude.value(g))?;
    let clip = clip_bound_report(&clip_in);

    let remainder_in = match inputs.remainder_convention {
        RemainderConvention::Remark => RemainderInputs::remark(g, v, inputs.pi_hat, p.policy_floor(), p.step_size())?,
        RemainderConvention::Lemma => {
            // One fourth moment for both levels: the worst case at the floor.
            let m4 = fourth_moment_bound(g, v, p.policy_floor())?;
            RemainderInputs {
                pi_hat: inputs.pi_hat,
                pi_min: p.policy_floor(),
                eta: p.step_size(),
                fourth_hat: m4,
                fourth_min: m4,
                collision: Some(collision_bound(g, v, inputs.pi_hat)),
                convention: RemainderConvention::Lemma,
            }
        }
    };
    let remainder = remainder_bound(&remainder_in)?;
    let phi = inputs.phi.unwrap_or((v - 1) as f64);
    let cp = ClippedEntropyParams { rho: inputs.rho, delta: inputs.delta, p: inputs.threshold_p };
    let clipped_entropy = clipped_entropy_bound(phi, p, remainder.bound, &cp)?;
    Ok(BoundsReport {
        inputs: *inputs,
        mean_abs_advantage: mean_abs,
        clip,
        leading_coefficient: leading_coefficient(g),
        remainder,
        collision_bound: collision_bound(g, v, inputs.pi_hat),
        clipped_entropy,
        cap_predicate: cap_inactive_predicate(p),
    })
}
