//! Oracle-vs-formula check suites and the random instance generators they share.

use crate::advantage::{
    advantage_max_abs_oracle, advantage_moment_oracle, categorical, closed_form_mean_abs, compute_advantages,
    token_advantage, MomentKind, RewardGroup, RolloutGroup, SignedMass, TokenAdvantage,
};
use crate::clip_bounds::{clip_correction_bound, phi_fn, small_eta_constants, ClipBoundInputs};
use crate::entropy::{
    covariance_term_check, exact_entropy_step_oracle, leading_coefficient, skewness_phi, two_arm_phi, UpdateMode,
};
use crate::error::Result;
use crate::kkt::{clip_projected, clipped_update_mass, Branch, KktOptions};
use crate::misalign::{
    conditional_damage, conditional_variance_given_z, damage_moments, fraction_monotonicity_scan, reward_vector_oracle,
    MisalignConfig, MomentMethod, Statistic,
};
use crate::params::HyperParams;
use crate::policy::Policy;
use crate::presets::{bounds_report, BoundsInputs};
use crate::rng::{stream, Stream};
use crate::scalar::{Exact, Field};
use crate::update::{exp_update, log_ratio_residual, penalized_objective};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Advantage,
    Entropy,
    Clip,
    Misalign,
    Kkt,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Advantage, Suite::Entropy, Suite::Clip, Suite::Misalign, Suite::Kkt];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Advantage => "advantage",
            Suite::Entropy => "entropy",
            Suite::Clip => "clip",
            Suite::Misalign => "misalign",
            Suite::Kkt => "kkt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    /// The quantity compared against `tolerance`; its meaning is in `detail`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

struct Outcome {
    passed: bool,
    value: f64,
    tolerance: f64,
    detail: String,
}

fn outcome(passed: bool, value: f64, tolerance: f64, detail: impl Into<String>) -> Outcome {
    Outcome { passed, value, tolerance, detail: detail.into() }
}

fn timed(suite: Suite, name: &str, f: impl FnOnce() -> Result<Outcome>) -> Check {
    let start = Instant::now();
    let o = f().unwrap_or_else(|e| outcome(false, f64::NAN, f64::NAN, format!("error: {e}")));
    Check {
        suite: suite.name().into(),
        name: name.into(),
        passed: o.passed,
        value: o.value,
        tolerance: o.tolerance,
        detail: o.detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Advantage => advantage_suite(),
        Suite::Entropy => entropy_suite(),
        Suite::Clip => clip_suite(),
        Suite::Misalign => misalign_suite(),
        Suite::Kkt => kkt_suite(),
    }
}

pub fn run_all() -> Vec<Check> {
    Suite::ALL.into_iter().flat_map(run_suite).collect()
}

// ---- advantage ----

/// Worst deviations over `G = 2..=max_g` of the advantage-moment identities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSweep {
    pub max_odd_signed: f64,
    pub max_second_err: f64,
    pub max_abs1_err: f64,
    /// Smallest `E[A^k] - (1 - 2^{1-G})` over even `k ∈ {2, 4, 6}`.
    pub min_even_margin: f64,
    pub max_abs_err: f64,
}

pub fn advantage_sweep(max_g: usize) -> Result<AdvantageSweep> {
    let mut s = AdvantageSweep { min_even_margin: f64::INFINITY, ..Default::default() };
    for g in 2..=max_g {
        let floor = 1.0 - 2f64.powi(1 - g as i32);
        for k in [1, 3, 5, 7] {
            s.max_odd_signed = s.max_odd_signed.max(advantage_moment_oracle(g, k, MomentKind::Signed)?.abs());
        }
        let second = advantage_moment_oracle(g, 2, MomentKind::Signed)?;
        s.max_second_err = s.max_second_err.max((second - floor).abs());
        let abs1 = advantage_moment_oracle(g, 1, MomentKind::Absolute)?;
        s.max_abs1_err = s.max_abs1_err.max((abs1 - closed_form_mean_abs(g)).abs());
        for k in [2, 4, 6] {
            s.min_even_margin = s.min_even_margin.min(advantage_moment_oracle(g, k, MomentKind::Absolute)? - floor);
        }
        let top = advantage_max_abs_oracle(g)?;
        s.max_abs_err = s.max_abs_err.max((top - ((g - 1) as f64).sqrt()).abs());
    }
    Ok(s)
}

fn advantage_suite() -> Vec<Check> {
    let su = Suite::Advantage;
    let mut out = Vec::new();
    let sweep = std::cell::OnceCell::new();
    let get = || -> Result<AdvantageSweep> { sweep.get_or_init(|| advantage_sweep(16)).clone() };
    out.push(timed(su, "odd signed moments vanish, G ≤ 16", || {
        let s = get()?;
        Ok(outcome(s.max_odd_signed == 0.0, s.max_odd_signed, 0.0, "max |E[A^k]|, k odd"))
    }));
    out.push(timed(su, "second moment is 1 - 2^(1-G)", || {
        let s = get()?;
        Ok(outcome(s.max_second_err <= 1e-12, s.max_second_err, 1e-12, "max abs error"))
    }));
    out.push(timed(su, "mean |A| matches closed form", || {
        let s = get()?;
        Ok(outcome(s.max_abs1_err <= 1e-12, s.max_abs1_err, 1e-12, "max abs error"))
    }));
    out.push(timed(su, "even moments above 1 - 2^(1-G)", || {
        let s = get()?;
        Ok(outcome(s.min_even_margin >= -1e-12, s.min_even_margin, -1e-12, "smallest margin"))
    }));
    out.push(timed(su, "max |A| is sqrt(G-1)", || {
        let s = get()?;
        Ok(outcome(s.max_abs_err <= 1e-12, s.max_abs_err, 1e-12, "max abs error"))
    }));
    out.push(timed(su, "E|A| at G=16 is 0.967", || {
        let v = advantage_moment_oracle(16, 1, MomentKind::Absolute)?;
        Ok(outcome((v - 0.967).abs() < 1e-3, v, 1e-3, "E|A|"))
    }));
    out
}

// ---- entropy ----

/// `oracle(η) + c_G·Φ·η²` at `η` and at `η/2`, and their ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticScaling {
    pub residual: f64,
    pub residual_half: f64,
    pub ratio: f64,
}

pub fn quartic_scaling(pi: &Policy<f64>, group_size: usize, eta: f64) -> Result<QuarticScaling> {
    let v = pi.len();
    let lead = leading_coefficient::<f64>(group_size) * skewness_phi(pi);
    let resid = |e: f64| -> Result<f64> {
        let params = HyperParams::new(group_size, e, 0.2, 1, v, pi.min_prob())?;
        Ok(exact_entropy_step_oracle(pi, &params, UpdateMode::Unclipped)? + lead * e * e)
    };
    let residual = resid(eta)?;
    let residual_half = resid(eta / 2.0)?;
    Ok(QuarticScaling { residual, residual_half, ratio: residual.abs() / residual_half.abs() })
}

/// Exact one-step `E[ΔH]` for a two-armed policy.
pub fn two_arm_step(beta: f64, group_size: usize, eta: f64, eps: f64, mode: UpdateMode) -> Result<f64> {
    let pi = Policy::two_arm(beta)?;
    let params = HyperParams::new(group_size, eta, eps, 1, 2, pi.min_prob())?;
    exact_entropy_step_oracle(&pi, &params, mode)
}

/// Policies the covariance and entropy suites sweep: two-armed grids plus a
/// few skewed multi-arm vectors.
pub fn covariance_cases() -> Vec<(Policy<f64>, usize)> {
    let mut cases = Vec::new();
    for beta in [0.05, 0.3, 0.5, 0.9] {
        for g in [2, 5, 8, 12] {
            cases.push((Policy::two_arm(beta).expect("valid β"), g));
        }
    }
    for w in [[0.2, 0.3, 0.5].as_slice(), &[0.01, 0.09, 0.9], &[0.7, 0.1, 0.1, 0.1]] {
        let pi = Policy::from_weights(w).expect("valid weights");
        let max_g = if pi.len() == 3 { 8 } else { 6 };
        for g in [2, 4, max_g] {
            cases.push((pi.clone(), g));
        }
    }
    cases
}

fn entropy_suite() -> Vec<Check> {
    let su = Suite::Entropy;
    let mut out = Vec::new();
    out.push(timed(su, "two-arm Φ closed form", || {
        let mut worst = 0.0f64;
        for i in 1..200 {
            let beta = i as f64 / 200.0;
            let gen = skewness_phi(&Policy::two_arm(beta)?);
            worst = worst.max((gen - two_arm_phi(beta)).abs());
        }
        Ok(outcome(worst <= 1e-12, worst, 1e-12, "max abs difference over β grid"))
    }));
    out.push(timed(su, "Φ vanishes near β = 0.176", || {
        let v = two_arm_phi(0.176f64);
        Ok(outcome(v.abs() < 2e-3, v, 2e-3, "Φ(0.176)"))
    }));
    out.push(timed(su, "Φ sign split at 0.176 / 0.824", || {
        let inside = (20..=80).all(|i| two_arm_phi(i as f64 / 100.0) > 0.0);
        let outside = [0.01, 0.05, 0.1, 0.17, 0.83, 0.9, 0.95, 0.99].iter().all(|&b| two_arm_phi(b) < 0.0);
        Ok(outcome(inside && outside, two_arm_phi(0.9), 0.0, "Φ(0.9); positive inside, negative outside"))
    }));
    out.push(timed(su, "c_G·η² at G=16, η=5e-7", || {
        let v = leading_coefficient::<f64>(16) * 5e-7f64.powi(2);
        Ok(outcome((v - 7.81e-15).abs() < 1e-17, v, 1e-17, "c_G·η²"))
    }));
    for beta in [0.3, 0.5, 0.7] {
        out.push(timed(su, &format!("quartic remainder, β = {beta}"), || {
            let q = quartic_scaling(&Policy::two_arm(beta)?, 8, 1e-2)?;
            Ok(outcome(q.ratio >= 12.0, q.ratio, 12.0, "residual shrink factor on η halving"))
        }));
    }
    for (beta, negative) in [(0.3, true), (0.5, true), (0.7, true), (0.05, false), (0.95, false)] {
        out.push(timed(su, &format!("entropy step sign, β = {beta}"), || {
            let d = two_arm_step(beta, 8, 1e-2, 0.2, UpdateMode::Unclipped)?;
            Ok(outcome(if negative { d < 0.0 } else { d > 0.0 }, d, 0.0, "exact E[ΔH]"))
        }));
    }
    for beta in [0.9, 0.95] {
        out.push(timed(su, &format!("clipped ≤ unclipped, β = {beta}, η = 0.2"), || {
            let u = two_arm_step(beta, 8, 0.2, 0.2, UpdateMode::Unclipped)?;
            let c = two_arm_step(beta, 8, 0.2, 0.2, UpdateMode::Clipped)?;
            Ok(outcome(c <= u, c - u, 0.0, "E[ΔH_clipped] - E[ΔH_unclipped]"))
        }));
    }
    out.push(timed(su, "covariance term vanishes", || {
        let mut worst = 0.0f64;
        for (pi, g) in covariance_cases().into_iter().filter(|(_, g)| *g <= 8) {
            let params = HyperParams::new(g, 0.1, 0.2, 1, pi.len(), pi.min_prob())?;
            worst = worst.max(covariance_term_check(&pi, &params)?.abs());
        }
        Ok(outcome(worst <= 1e-14, worst, 1e-14, "max |E[Cov]|"))
    }));
    out.push(timed(su, "remark-entropy bound is negative", || {
        let r = bounds_report(&BoundsInputs::remark_entropy()?)?;
        let t = r.clipped_entropy.total;
        Ok(outcome(t < -1.45e-7, t, -1.45e-7, "total bound on E[ΔH]"))
    }));
    out
}

// ---- clip ----

fn clip_suite() -> Vec<Check> {
    let su = Suite::Clip;
    let mut out = Vec::new();
    out.push(timed(su, "signal ratio at the cor34 inputs", || {
        let r = bounds_report(&BoundsInputs::cor34()?)?;
        Ok(outcome((r.clip.ratio - 17.15).abs() <= 0.1, r.clip.ratio, 0.1, "ratio, target 17.15"))
    }));
    out.push(timed(su, "φ nonnegative, zero only at 1, convex", || {
        let n = 10_000;
        let xs: Vec<f64> = (0..=n).map(|i| 10.0 * i as f64 / n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&u| phi_fn(u)).collect();
        let nonneg = ys.iter().zip(&xs).all(|(&y, &u)| y > 0.0 || (u - 1.0).abs() < 1e-12);
        let worst = ys.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min);
        Ok(outcome(nonneg && worst > 0.0, worst, 0.0, "smallest second difference"))
    }));
    out.push(timed(su, "bound monotone in p_+, L, η", || {
        let mut ok = true;
        let bound = |eta: f64, l: usize, p: f64| -> Result<f64> {
            let params = HyperParams::new(16, eta, 0.2, l, 1000, 1e-3)?;
            Ok(clip_correction_bound(&ClipBoundInputs::new(params, p, 0.5, 3.75)?))
        };
        let etas = [1e-5, 1e-4, 1e-3, 3e-3, 1e-2];
        let ls = [1, 16, 256, 4096];
        let ps = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0];
        for (ie, &eta) in etas.iter().enumerate() {
            for (il, &l) in ls.iter().enumerate() {
                for (ip, &p) in ps.iter().enumerate() {
                    let b = bound(eta, l, p)?;
                    if ie > 0 {
                        ok &= bound(etas[ie - 1], l, p)? <= b;
                    }
                    if il > 0 {
                        ok &= bound(eta, ls[il - 1], p)? <= b;
                    }
                    if ip > 0 {
                        ok &= bound(eta, l, ps[ip - 1])? <= b;
                    }
                }
            }
        }
        Ok(outcome(ok, 0.0, 0.0, "grid neighbours ordered"))
    }));
    out.push(timed(su, "small-η envelope dominates the bound", || {
        let (worst, _) = small_eta_envelope_margin()?;
        Ok(outcome(worst >= 0.0, worst, 0.0, "smallest envelope - bound"))
    }));
    out
}

/// Smallest `envelope - bound` over an `(η ≤ π_min, L, p_+, ε, π_min)` grid,
/// and the number of grid points.
pub fn small_eta_envelope_margin() -> Result<(f64, usize)> {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for &pi_min in &[0.5, 0.1, 1e-2, 1e-3] {
        for &eps in &[0.1, 0.2, 0.5] {
            for &l in &[1, 8, 128, 4096] {
                for &p in &[0.0, 1e-4, 1e-2, 0.3, 1.0] {
                    for i in 1..=20 {
                        let eta = pi_min * i as f64 / 20.0;
                        let params = HyperParams::new(16, eta, eps, l, 2, pi_min.min(0.5))?;
                        for m in [1.0, 3.75] {
                            let b = clip_correction_bound(&ClipBoundInputs::new(params, p, 0.0, m)?);
                            let env = small_eta_constants(&params, m).envelope(eta, l, p);
                            worst = worst.min(env - b);
                            count += 1;
                        }
                    }
                }
            }
        }
    }
    Ok((worst, count))
}

// ---- misalign ----

/// Worst-case summary of the misalignment identities over all splits with
/// `G ≤ max_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisalignSweep {
    pub configs: usize,
    pub moment_mismatches: Vec<(usize, usize)>,
    pub ordering_failures: Vec<(usize, usize)>,
    pub conditional_mean_failures: Vec<(usize, usize)>,
    pub decomposition_failures: Vec<(usize, usize)>,
    pub non_monotone_scans: Vec<usize>,
}

impl MisalignSweep {
    pub fn all_hold(&self) -> bool {
        self.moment_mismatches.is_empty()
            && self.ordering_failures.is_empty()
            && self.conditional_mean_failures.is_empty()
            && self.decomposition_failures.is_empty()
            && self.non_monotone_scans.is_empty()
    }
}

pub fn misalign_sweep(max_g: usize) -> Result<MisalignSweep> {
    let mut s = MisalignSweep {
        configs: 0,
        moment_mismatches: vec![],
        ordering_failures: vec![],
        conditional_mean_failures: vec![],
        decomposition_failures: vec![],
        non_monotone_scans: vec![],
    };
    for g in 2..=max_g {
        for n_c in 1..g {
            let cfg = MisalignConfig::new(n_c, g - n_c)?;
            s.configs += 1;
            let key = (n_c, g - n_c);
            let closed = damage_moments::<Exact>(&cfg, MomentMethod::ClosedForm)?;
            let cells = damage_moments::<Exact>(&cfg, MomentMethod::CellOracle)?;
            if closed != cells {
                s.moment_mismatches.push(key);
            }
            let st = conditional_damage::<Exact>(&cfg)?;
            if n_c > g - n_c && !st.ordering_holds() {
                s.ordering_failures.push(key);
            }
            let target = Exact::from_int((n_c * (g - n_c)) as i128) / Exact::from_int(g as i128);
            if st.mean_given_f_gt_g != target || st.mean_given_g_gt_f != target {
                s.conditional_mean_failures.push(key);
            }
            if st.var_given_f_gt_g != st.var_given_f_gt_g_decomposed
                || st.var_given_g_gt_f != st.var_given_g_gt_f_decomposed
            {
                s.decomposition_failures.push(key);
            }
        }
        if !fraction_monotonicity_scan::<Exact>(g)?.strictly_decreasing {
            s.non_monotone_scans.push(g);
        }
    }
    Ok(s)
}

/// Largest `|raw oracle - cell oracle|` over the basic statistics for `G ≤ max_g`.
pub fn raw_oracle_agreement(max_g: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for g in 2..=max_g {
        for n_c in 1..g {
            let cfg = MisalignConfig::new(n_c, g - n_c)?;
            let st = conditional_damage::<f64>(&cfg)?;
            let pairs = [
                (Statistic::Mean, st.mean),
                (Statistic::Variance, st.variance),
                (Statistic::EDeltaFGtG, st.e_delta_f_gt_g),
                (Statistic::EDeltaGGtF, st.e_delta_g_gt_f),
                (Statistic::PFGtG, st.p_f_gt_g),
                (Statistic::PGGtF, st.p_g_gt_f),
                (Statistic::VarGivenFGtG, st.var_given_f_gt_g),
                (Statistic::VarGivenGGtF, st.var_given_g_gt_f),
            ];
            for (stat, v) in pairs {
                worst = worst.max((reward_vector_oracle::<f64>(&cfg, stat)? - v).abs());
            }
        }
    }
    Ok(worst)
}

fn misalign_suite() -> Vec<Check> {
    let su = Suite::Misalign;
    let mut out = Vec::new();
    let sweep = std::cell::OnceCell::new();
    let get = || -> Result<MisalignSweep> { sweep.get_or_init(|| misalign_sweep(20)).clone() };
    out.push(timed(su, "cell moments equal closed forms, G ≤ 20", || {
        let s = get()?;
        Ok(outcome(s.moment_mismatches.is_empty(), s.moment_mismatches.len() as f64, 0.0, "mismatching splits"))
    }));
    out.push(timed(su, "conditional ordering for n_c > n_i", || {
        let s = get()?;
        Ok(outcome(s.ordering_failures.is_empty(), s.ordering_failures.len() as f64, 0.0, "failing splits"))
    }));
    out.push(timed(su, "E[Δ | f>g] = E[Δ | g>f] = n_c·n_i/G", || {
        let s = get()?;
        let n = s.conditional_mean_failures.len();
        Ok(outcome(n == 0, n as f64, 0.0, "failing splits"))
    }));
    out.push(timed(su, "conditional variance decomposition", || {
        let s = get()?;
        let n = s.decomposition_failures.len();
        Ok(outcome(n == 0, n as f64, 0.0, "failing splits"))
    }));
    out.push(timed(su, "fraction strictly decreasing in n_c", || {
        let s = get()?;
        Ok(outcome(s.non_monotone_scans.is_empty(), s.non_monotone_scans.len() as f64, 0.0, "failing G"))
    }));
    out.push(timed(su, "reward-vector oracle agrees with cells, G ≤ 16", || {
        let w = raw_oracle_agreement(16)?;
        Ok(outcome(w <= 1e-12, w, 1e-12, "max abs difference"))
    }));
    out.push(timed(su, "Var(Δ | Z=z) cell by cell, G = 10", || {
        let mut worst = 0.0f64;
        for n_c in 1..10 {
            let cfg = MisalignConfig::new(n_c, 10 - n_c)?;
            for z in 0..=10 {
                let raw = reward_vector_oracle::<f64>(&cfg, Statistic::VarGivenZ(z))?;
                worst = worst.max((raw - conditional_variance_given_z::<f64>(&cfg, z)).abs());
            }
        }
        Ok(outcome(worst <= 1e-12, worst, 1e-12, "max abs difference"))
    }));
    out
}

// ---- kkt ----

/// A random clipped-update problem: policy, signed advantage mass, η, ε.
#[derive(Clone, Debug, PartialEq)]
pub struct KktInstance {
    pub pi: Policy<f64>,
    pub mass: SignedMass<f64>,
    pub eta: f64,
    pub eps: f64,
}

/// Two to five arms, `G ∈ [2, 8]` rollouts with random rewards, η
/// log-uniform in `[1e-2, 2]`, ε = 0.2.
pub fn random_kkt_instance(rng: &mut Stream) -> Result<KktInstance> {
    let v = rng.gen_range(2..=5);
    let w: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05..1.0)).collect();
    let pi = Policy::from_weights(&w)?;
    let g = rng.gen_range(2..=8);
    let arms: Vec<usize> = (0..g).map(|_| categorical(pi.probs(), rng.gen())).collect();
    let rewards = RewardGroup::from_mask(rng.gen::<u64>(), g);
    let adv = compute_advantages::<f64>(&rewards);
    let mass = SignedMass::from_group(&RolloutGroup::single_step(arms, v)?, &adv, v)?;
    let eta = 10f64.powf(rng.gen_range(-2.0..0.3));
    Ok(KktInstance { pi, mass, eta, eps: 0.2 })
}

/// Uniform draw from the simplex.
pub fn random_simplex_point(v: usize, rng: &mut Stream) -> Result<Policy<f64>> {
    let w: Vec<f64> = (0..v).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-300).collect();
    Policy::from_weights(&w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktInstanceOutcome {
    pub stationarity: f64,
    pub normalization: f64,
    pub cap_active: bool,
    /// `max |π_c - π_exp|` when the exponentiated update stays under the cap.
    pub unclipped_gap: Option<f64>,
    /// `F(π_c) - max F(probe)` over random probes and the clip-projected point.
    pub objective_margin: f64,
}

pub fn check_kkt_instance(inst: &KktInstance, probes: usize, rng: &mut Stream) -> Result<KktInstanceOutcome> {
    let (pi_c, sol) = clipped_update_mass(&inst.pi, &inst.mass, inst.eta, inst.eps, &KktOptions::default())?;
    let cap = 1.0 + inst.eps;
    let pi_u = exp_update(&inst.pi, &inst.mass.token_advantage(&inst.pi), inst.eta)?;
    let under_cap =
        pi_u.probs().iter().zip(inst.pi.probs()).zip(&inst.mass.plus).all(|((&u, &q), &p)| p == 0.0 || u / q < cap);
    let all_unclipped = sol.branch.iter().all(|b| *b == Branch::Unclipped);
    let unclipped_gap = (under_cap || all_unclipped)
        .then(|| pi_c.probs().iter().zip(pi_u.probs()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
    let f = |p: &Policy<f64>| penalized_objective(p, &inst.pi, &inst.mass, inst.eta, inst.eps);
    let f_c = f(&pi_c);
    let mut best = f(&clip_projected(&inst.pi, &pi_u, inst.eps));
    for _ in 0..probes {
        best = best.max(f(&random_simplex_point(inst.pi.len(), rng)?));
    }
    Ok(KktInstanceOutcome {
        stationarity: sol.max_stationarity(),
        normalization: sol.normalization_error,
        cap_active: sol.any_capped() || !under_cap,
        unclipped_gap,
        objective_margin: f_c - best,
    })
}

/// Aggregate of `check_kkt_instance` over `instances` seeded draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktSweep {
    pub instances: usize,
    pub cap_active: usize,
    pub max_stationarity: f64,
    pub max_normalization: f64,
    pub max_unclipped_gap: f64,
    pub min_objective_margin: f64,
}

pub fn kkt_sweep(instances: usize, probes: usize, seed: u64) -> Result<KktSweep> {
    let mut s = KktSweep {
        instances,
        cap_active: 0,
        max_stationarity: 0.0,
        max_normalization: 0.0,
        max_unclipped_gap: 0.0,
        min_objective_margin: f64::INFINITY,
    };
    for i in 0..instances {
        let mut rng = stream(seed, i as u64);
        let inst = random_kkt_instance(&mut rng)?;
        let o = check_kkt_instance(&inst, probes, &mut rng)?;
        s.max_stationarity = s.max_stationarity.max(o.stationarity);
        s.max_normalization = s.max_normalization.max(o.normalization);
        if let Some(gap) = o.unclipped_gap {
            s.max_unclipped_gap = s.max_unclipped_gap.max(gap);
        }
        if o.cap_active {
            s.cap_active += 1;
            s.min_objective_margin = s.min_objective_margin.min(o.objective_margin);
        }
    }
    Ok(s)
}

/// Random instance for the log-ratio expansion: a floored policy over two
/// to six arms, Ã from a real random group, η log-uniform in `[1e-4, 1e-1]`.
pub fn random_log_ratio_instance(rng: &mut Stream) -> Result<(Policy<f64>, TokenAdvantage<f64>, f64, f64)> {
    let v = rng.gen_range(2..=6);
    let pi_min = rng.gen_range(0.05..=0.5) / v as f64;
    let w: Vec<f64> = (0..v).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut pi = Policy::from_weights(&w.iter().map(|x| x + 1e-3).collect::<Vec<_>>())?;
    pi.enforce_floor(pi_min)?;
    let g = rng.gen_range(2..=16);
    let arms: Vec<usize> = (0..g).map(|_| categorical(pi.probs(), rng.gen())).collect();
    let adv = compute_advantages::<f64>(&RewardGroup::from_mask(rng.gen::<u64>(), g));
    let at = token_advantage(&RolloutGroup::single_step(arms, v)?, &adv, &pi)?;
    let eta = 10f64.powf(rng.gen_range(-4.0..=-1.0));
    Ok((pi, at, eta, pi_min))
}

/// Number of violated instances and the largest residual-to-bound ratio.
pub fn log_ratio_sweep(instances: usize, seed: u64) -> Result<(usize, f64)> {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = stream(seed, i as u64);
        let (pi, at, eta, pi_min) = random_log_ratio_instance(&mut rng)?;
        let rep = log_ratio_residual(&pi, &at, eta, pi_min, false)?;
        if !rep.holds {
            violations += 1;
        }
        worst = worst.max(rep.max_residual / rep.bound);
    }
    Ok((violations, worst))
}

fn kkt_suite() -> Vec<Check> {
    let su = Suite::Kkt;
    let mut out = Vec::new();
    let sweep = std::cell::OnceCell::new();
    let get = || -> Result<KktSweep> { sweep.get_or_init(|| kkt_sweep(200, 1000, 7)).clone() };
    out.push(timed(su, "stationarity residual", || {
        let s = get()?;
        Ok(outcome(s.max_stationarity <= 1e-9, s.max_stationarity, 1e-9, "max over 200 instances"))
    }));
    out.push(timed(su, "normalization", || {
        let s = get()?;
        Ok(outcome(s.max_normalization <= 1e-12, s.max_normalization, 1e-12, "max |Σ π_old r - 1|"))
    }));
    out.push(timed(su, "matches exponentiated update below the cap", || {
        let s = get()?;
        Ok(outcome(s.max_unclipped_gap <= 1e-10, s.max_unclipped_gap, 1e-10, "max probability gap"))
    }));
    out.push(timed(su, "beats random probes when capped", || {
        let s = get()?;
        let ok = s.min_objective_margin >= -1e-12 && s.cap_active > 0;
        Ok(outcome(ok, s.min_objective_margin, -1e-12, format!("min margin over {} capped instances", s.cap_active)))
    }));
    out.push(timed(su, "log-ratio expansion within Cη³", || {
        let (violations, worst) = log_ratio_sweep(2000, 11)?;
        Ok(outcome(violations == 0, worst, 1.0, "largest residual / bound"))
    }));
    out
}
