//! Tabular laboratory for GRPO learning dynamics under random rewards.
//!
//! The crate implements the group-normalized advantage, the exponentiated
//! (mirror-descent) policy update and its upper-clipped variant, the one-step
//! entropy predictions with their remainder bounds, the clipping-correction
//! bounds, and the reward-misalignment damage model. Every closed form has an
//! exact enumeration oracle next to it.
//!
//! Closed-form code is generic over [`Real`] (f32, f64); the misalignment
//! moments are generic over [`Field`], which includes the exact rational
//! type [`Exact`]. Oracles and the simulator run in f64.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advantage;
pub mod clip_bounds;
pub mod entropy;
pub mod enumerate;
pub mod error;
pub mod kkt;
pub mod misalign;
pub mod params;
pub mod policy;
pub mod presets;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod update;
pub mod verify;

pub use advantage::{
    advantage_moment_oracle, advantage_moments, closed_form_mean_abs, compute_advantages, sample_random_rewards,
    sample_rollouts, token_advantage, AdvantageGroup, AdvantageMoments, MomentKind, RewardGroup, RolloutGroup,
    SignedMass, TokenAdvantage,
};
pub use clip_bounds::{
    clip_bound_report, clip_correction_bound, mc_clip_estimate, phi_fn, raw_surrogate_lower_bound, signal_ratio,
    small_eta_constants, ClipBoundInputs, ClipBoundReport, Magnitude,
};
pub use entropy::{
    atilde_moment_formulas, cap_inactive_predicate, collision_bound, covariance_term_check, entropy,
    exact_entropy_step_oracle, leading_coefficient, predicted_entropy_step_clipped_bound,
    predicted_entropy_step_unclipped, remainder_bound, skewness_phi, two_arm_phi, AtildeMoments, ClippedEntropyParams,
    EntropyStepReport, RemainderConvention, RemainderInputs, UpdateMode,
};
pub use error::{Error, Result};
pub use kkt::{clipped_update, clipped_update_mass, Branch, KktOptions, KktSolution};
pub use misalign::{
    conditional_damage, damage, damage_moments, fraction_monotonicity_scan, reward_vector_oracle, DamageStats,
    MisalignConfig, MomentMethod, Statistic,
};
pub use params::HyperParams;
pub use policy::Policy;
pub use scalar::{Exact, Field, Real};
pub use sim::{paired_clip_experiment, run_training, summarize, InitialPolicy, RewardMode, SimConfig, Trajectory};
pub use update::{exp_update, importance_ratios, log_ratio_residual, surrogate_value, LogRatioReport};

pub type Policy32 = Policy<f32>;
pub type Policy64 = Policy<f64>;
pub type HyperParams32 = HyperParams<f32>;
pub type HyperParams64 = HyperParams<f64>;
pub type KktSolution32 = KktSolution<f32>;
pub type KktSolution64 = KktSolution<f64>;
pub type ClipBoundReport32 = ClipBoundReport<f32>;
pub type ClipBoundReport64 = ClipBoundReport<f64>;
pub type TokenAdvantage32 = TokenAdvantage<f32>;
pub type TokenAdvantage64 = TokenAdvantage<f64>;
pub type DamageStatsExact = DamageStats<Exact>;
pub type DamageStats64 = DamageStats<f64>;
