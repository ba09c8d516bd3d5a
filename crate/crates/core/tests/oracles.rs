use approx::assert_abs_diff_eq;
use grpo_dynamics::advantage::{
    advantage_moment_oracle, compute_advantages, token_advantage, AdvantageGroup, MomentKind, RewardGroup, RolloutGroup,
};
use grpo_dynamics::clip_bounds::{
    phi_fn, raw_constant, raw_surrogate_lower_bound, signal_ratio, small_eta_constants, ClipBoundInputs,
};
use grpo_dynamics::entropy::{
    atilde_moment_formulas, cap_inactive_predicate, collision_bound, entropy, exact_entropy_step_oracle,
    predicted_entropy_step_unclipped, remainder_constant, skewness_phi, RemainderConvention, UpdateMode,
};
use grpo_dynamics::misalign::{
    conditional_damage, damage, damage_moments, fraction_monotonicity_scan, reward_vector_oracle, MisalignConfig,
    MomentMethod, Statistic,
};
use grpo_dynamics::presets::{bounds_report, BoundsInputs};
use grpo_dynamics::update::{exp_update, importance_ratios, log_ratio_residual, surrogate_value};
use grpo_dynamics::{Exact, Field, HyperParams, Policy, TokenAdvantage};

#[test]
fn advantage_examples() {
    let a = compute_advantages::<f64>(&RewardGroup::new(vec![1, 1, 0, 0]).unwrap());
    assert_eq!(a.advantages, vec![1.0, 1.0, -1.0, -1.0]);
    let a = compute_advantages::<f64>(&RewardGroup::new(vec![1, 1, 1, 1]).unwrap());
    assert!(a.degenerate && a.advantages.iter().all(|&x| x == 0.0));
    let a = compute_advantages::<f64>(&RewardGroup::new(vec![1, 0, 0, 0]).unwrap());
    assert_abs_diff_eq!(a.advantages[0], 3f64.sqrt(), epsilon = 1e-15);
    for &x in &a.advantages[1..] {
        assert_abs_diff_eq!(x, -1.0 / 3f64.sqrt(), epsilon = 1e-15);
    }
}

#[test]
fn advantage_moment_examples() {
    assert_abs_diff_eq!(advantage_moment_oracle(16, 1, MomentKind::Absolute).unwrap(), 0.967, epsilon = 1e-3);
    assert_eq!(advantage_moment_oracle(2, 2, MomentKind::Absolute).unwrap(), 0.5);
    assert_abs_diff_eq!(advantage_moment_oracle(4, 1, MomentKind::Absolute).unwrap(), 0.80801, epsilon = 1e-5);
    assert!(advantage_moment_oracle(25, 1, MomentKind::Absolute).is_err());
}

#[test]
fn token_advantage_example() {
    let pi = Policy::two_arm(0.5).unwrap();
    let r = RolloutGroup::single_step(vec![0, 1], 2).unwrap();
    let adv = AdvantageGroup { advantages: vec![1.0, -1.0], degenerate: false };
    assert_eq!(token_advantage(&r, &adv, &pi).unwrap().values, vec![1.0, -1.0]);
    let zero = AdvantageGroup { advantages: vec![0.0, 0.0], degenerate: true };
    assert_eq!(token_advantage(&r, &zero, &pi).unwrap().values, vec![0.0, 0.0]);
}

#[test]
fn update_examples() {
    let pi = Policy::two_arm(0.5).unwrap();
    let out = exp_update(&pi, &TokenAdvantage::from_values(vec![1.0, -1.0]), 0.1).unwrap();
    assert_abs_diff_eq!(out.probs()[0], 0.549834, epsilon = 1e-6);
    let r = importance_ratios(&out, &pi).unwrap();
    assert_abs_diff_eq!(r[0], 1.099668, epsilon = 1e-6);
    assert_abs_diff_eq!(r[1], 0.900332, epsilon = 1e-6);

    let rollouts = RolloutGroup::single_step(vec![0, 1], 2).unwrap();
    let adv = AdvantageGroup { advantages: vec![1.0, -1.0], degenerate: false };
    assert_eq!(surrogate_value(&pi, &pi, &rollouts, &adv, 0.2).unwrap(), 0.0);
    let moved = Policy::new(vec![0.75, 0.25]).unwrap();
    assert_abs_diff_eq!(surrogate_value(&moved, &pi, &rollouts, &adv, 0.2).unwrap(), 0.35, epsilon = 1e-15);

    let rep = log_ratio_residual(&pi, &TokenAdvantage::from_values(vec![1.0, -1.0]), 0.01, 0.5, false).unwrap();
    assert_abs_diff_eq!(rep.bound, 1.283e-7, epsilon = 1e-10);
    assert!(rep.holds);
    let rep = log_ratio_residual(&pi, &TokenAdvantage::zeros(2), 0.01, 0.5, false).unwrap();
    assert_eq!(rep.max_residual, 0.0);
}

#[test]
fn log_ratio_residual_is_cubic() {
    let pi = Policy::from_weights(&[0.2, 0.3, 0.5]).unwrap();
    let at = TokenAdvantage::from_values(vec![1.3, -0.4, 0.2]);
    let r1 = log_ratio_residual(&pi, &at, 1e-2, 0.2, false).unwrap().max_residual;
    let r2 = log_ratio_residual(&pi, &at, 5e-3, 0.2, false).unwrap().max_residual;
    assert!(r1 / r2 >= 7.5, "{}", r1 / r2);
}

#[test]
#[allow(clippy::approx_constant)]
fn entropy_examples() {
    assert_abs_diff_eq!(entropy(&Policy::<f64>::uniform(7).unwrap()), 7f64.ln(), epsilon = 1e-15);
    assert_abs_diff_eq!(entropy(&Policy::two_arm(0.5).unwrap()), 0.693147, epsilon = 1e-6);
    assert_abs_diff_eq!(skewness_phi(&Policy::<f64>::uniform(9).unwrap()), 8.0, epsilon = 1e-12);
    assert_abs_diff_eq!(skewness_phi(&Policy::two_arm(0.5).unwrap()), 1.0, epsilon = 1e-15);
    assert!(skewness_phi(&Policy::two_arm(0.176f64).unwrap()).abs() < 2e-3);
    // 1 - 0.8·ln 9 = -0.7577797...
    assert_abs_diff_eq!(skewness_phi(&Policy::two_arm(0.9).unwrap()), 1.0 - 0.8 * 9f64.ln(), epsilon = 1e-12);
}

#[test]
fn prediction_examples() {
    let pi = Policy::two_arm(0.5).unwrap();
    let p = HyperParams::new(16, 5e-7, 0.2, 1, 2, 0.5).unwrap();
    let lead = predicted_entropy_step_unclipped(&pi, &p).unwrap().delta_predicted_leading;
    assert_abs_diff_eq!(lead, -7.81e-15, epsilon = 1e-17);
    let p2 = p.with_step_size(1e-6).unwrap();
    let lead2 = predicted_entropy_step_unclipped(&pi, &p2).unwrap().delta_predicted_leading;
    assert_abs_diff_eq!(lead2 / lead, 4.0, epsilon = 1e-12);
    let flat = Policy::two_arm(0.176f64).unwrap();
    let tiny = predicted_entropy_step_unclipped(&flat, &p).unwrap().delta_predicted_leading;
    assert!(tiny.abs() < 2e-3 * 7.82e-15);
}

#[test]
fn remainder_examples() {
    let r = bounds_report(&BoundsInputs::remark_entropy().unwrap()).unwrap();
    assert_abs_diff_eq!(r.remainder.c_hat, 3.43e-8, epsilon = 1e-10);
    assert_abs_diff_eq!(r.remainder.c_min, 5.31e-7, epsilon = 1e-9);
    assert_eq!(remainder_constant(0.1, 0.1, 0.0, 5.0, RemainderConvention::Lemma), 0.0);
    assert_eq!(remainder_constant(0.1, 0.1, 0.0, 5.0, RemainderConvention::Remark), 0.0);
    let c = r.clipped_entropy.clipped;
    assert_abs_diff_eq!(c.x_max, 10.98, epsilon = 0.01);
    assert_abs_diff_eq!(c.m_p, 2.29, epsilon = 0.01);
    assert_abs_diff_eq!(c.delta_eff, 9.74, epsilon = 0.01);
    assert_abs_diff_eq!(c.c_p, -1.29e-6, epsilon = 1e-8);
    assert_abs_diff_eq!(c.term, -2.01e-7, epsilon = 2e-9);
    assert!(r.clipped_entropy.total < -1.49e-7);
}

#[test]
fn moment_formula_examples() {
    let pi = Policy::two_arm(0.3).unwrap();
    let p = HyperParams::new(16, 0.1, 0.2, 1, 2, 0.3).unwrap();
    let m = atilde_moment_formulas(&p, &pi).unwrap();
    assert_abs_diff_eq!(m.e_var, (1.0 - 2f64.powi(-15)) / 16.0, epsilon = 1e-15);
    assert_abs_diff_eq!(m.e_var, 0.0624981, epsilon = 1e-7);
    let u = Policy::<f64>::uniform(5).unwrap();
    let p = HyperParams::new(4, 0.1, 0.2, 1, 5, 0.2).unwrap();
    assert_abs_diff_eq!(atilde_moment_formulas(&p, &u).unwrap().e_cov_log, 0.0, epsilon = 1e-15);
}

#[test]
fn collision_and_cap_examples() {
    assert_abs_diff_eq!(collision_bound(16, 150_000, 2e-7), 7.2e-7, epsilon = 1e-12);
    assert_eq!(collision_bound(16, 150_000, 0.0), 0.0);
    let p = HyperParams::new(16, 5e-7, 0.2, 1, 150_000, 1e-7).unwrap();
    let c = cap_inactive_predicate(&p);
    assert!(c.holds);
    assert_abs_diff_eq!(c.lhs, 3e-7, epsilon = 1e-15);
    assert_abs_diff_eq!(c.rhs, 2.66e-3, epsilon = 5e-6);
    let big = HyperParams::new(16, 1.0, 0.2, 1, 150_000, 1e-7).unwrap();
    assert!(!cap_inactive_predicate(&big).holds);
}

#[test]
fn exact_entropy_step_examples() {
    let pi = Policy::two_arm(0.5).unwrap();
    let p = HyperParams::new(8, 0.0, 0.2, 1, 2, 0.5).unwrap();
    assert_eq!(exact_entropy_step_oracle(&pi, &p, UpdateMode::Unclipped).unwrap(), 0.0);
    assert_eq!(exact_entropy_step_oracle(&pi, &p, UpdateMode::Clipped).unwrap(), 0.0);
    let skew = Policy::two_arm(0.9).unwrap();
    let p = HyperParams::new(8, 1e-2, 0.2, 1, 2, 0.1).unwrap();
    assert!(exact_entropy_step_oracle(&skew, &p, UpdateMode::Unclipped).unwrap() > 0.0);
    let too_big = HyperParams::new(14, 1e-2, 0.2, 1, 2, 0.1).unwrap();
    assert!(exact_entropy_step_oracle(&skew, &too_big, UpdateMode::Unclipped).is_err());
}

#[test]
fn exact_steps_within_remainder_budget() {
    for (w, g) in [(vec![0.5, 0.5], 8), (vec![0.3, 0.7], 8), (vec![0.2, 0.3, 0.5], 5), (vec![0.1, 0.9], 6)] {
        let pi = Policy::from_weights(&w).unwrap();
        for eta in [1e-3, 1e-2, 5e-2] {
            let p = HyperParams::new(g, eta, 0.2, 1, pi.len(), pi.min_prob()).unwrap();
            let measured = exact_entropy_step_oracle(&pi, &p, UpdateMode::Unclipped).unwrap();
            let rep = predicted_entropy_step_unclipped(&pi, &p).unwrap().with_measured(measured);
            assert_eq!(rep.within_budget, Some(true), "{w:?} G={g} η={eta}: {rep:?}");
        }
    }
}

#[test]
fn clip_bound_examples() {
    assert_eq!(phi_fn(1.0f64), 0.0);
    assert_abs_diff_eq!(phi_fn(0.5f64.exp()), 0.17564, epsilon = 1e-5);
    assert_abs_diff_eq!(phi_fn(1.2f64), 0.0187859, epsilon = 1e-7);
    assert_eq!(phi_fn(0.0f64), 1.0);

    let r = bounds_report(&BoundsInputs::cor34().unwrap()).unwrap();
    assert_abs_diff_eq!(r.clip.r_max, 1.6487, epsilon = 1e-4);
    assert_abs_diff_eq!(r.clip.delta_plus, 0.4487, epsilon = 1e-4);
    assert_abs_diff_eq!(r.clip.bound_ctot, 223.7, epsilon = 0.1);
    assert_eq!(r.clip.raw_constant, 1.25e11);
    assert_abs_diff_eq!(r.clip.lower_nraw, 3836.8, epsilon = 1.0);
    assert_abs_diff_eq!(r.clip.ratio, 17.15, epsilon = 0.1);

    let params = BoundsInputs::cor34().unwrap().params;
    let zero = ClipBoundInputs::<f64>::new(params, 0.0, 0.967, 3.75).unwrap();
    assert!(signal_ratio(&zero).is_infinite());
    let eta0 = ClipBoundInputs::new(params.with_step_size(0.0).unwrap(), 0.001, 0.967, 3.75).unwrap();
    assert_eq!(raw_surrogate_lower_bound(&eta0), 4096.0 * 0.967);
    assert_eq!(raw_constant(&params), 1.25e11);
    let longer = HyperParams::new(16, 5e-7, 0.2, 8192, 150_000, 1e-6).unwrap();
    let base = ClipBoundInputs::new(params, 0.001, 0.967, 3.75).unwrap();
    assert!(signal_ratio(&ClipBoundInputs::new(longer, 0.001, 0.967, 3.75).unwrap()) > signal_ratio(&base));

    let unit = HyperParams::new(2, 0.1, 0.2, 1, 2, 0.5).unwrap();
    let k = small_eta_constants(&unit, 1.0);
    assert_abs_diff_eq!(k.c1, 2.0 * (2.0 * std::f64::consts::E).sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(k.c1, 4.663288, epsilon = 1e-6);
    assert_abs_diff_eq!(k.c2, 3.4366, epsilon = 1e-4);
}

#[test]
fn misalignment_examples() {
    let cfg = MisalignConfig::new(12, 4).unwrap();
    assert_eq!(damage::<f64>(0, 0, &cfg).unwrap(), 0.0);
    assert_eq!(damage::<f64>(2, 3, &cfg).unwrap(), 2.25);
    assert_eq!(damage::<f64>(4, 12, &cfg).unwrap(), 2.0 * 12.0 * 4.0 / 16.0);
    let e = |n: i128, d: i128| Exact::from_int(n) / Exact::from_int(d);

    for (n_c, n_i, mean, var) in [(12, 4, e(3, 1), e(3, 4)), (8, 8, e(4, 1), e(1, 1)), (1, 1, e(1, 2), e(1, 8))] {
        let cfg = MisalignConfig::new(n_c, n_i).unwrap();
        for method in [MomentMethod::ClosedForm, MomentMethod::CellOracle] {
            let m = damage_moments::<Exact>(&cfg, method).unwrap();
            assert_eq!((m.mean, m.variance), (mean.clone(), var.clone()));
        }
    }

    let st = conditional_damage::<Exact>(&cfg).unwrap();
    assert_eq!(st.mean_given_f_gt_g, e(3, 1));
    assert_eq!(st.mean_given_g_gt_f, e(3, 1));
    assert!(st.p_f_gt_g < st.p_g_gt_f);
    assert!(st.ordering_holds());
    let sym = conditional_damage::<Exact>(&MisalignConfig::new(6, 6).unwrap()).unwrap();
    assert_eq!(sym.e_delta_f_gt_g, sym.e_delta_g_gt_f);

    let scan = fraction_monotonicity_scan::<Exact>(16).unwrap();
    assert!(scan.strictly_decreasing);
    let last = scan.rows.last().unwrap();
    assert_eq!(last.n_c, 15);
    assert!(scan.rows.iter().all(|r| r.fraction >= last.fraction));
    assert_eq!(fraction_monotonicity_scan::<Exact>(2).unwrap().rows.len(), 1);

    // All rewards zero: f = 0, g = n_c.
    let all_zero = damage::<Exact>(0, 12, &cfg).unwrap();
    assert_eq!(all_zero, e(3, 1));
    let raw_mean: Exact = reward_vector_oracle(&cfg, Statistic::Mean).unwrap();
    assert_eq!(raw_mean, e(3, 1));
}
