use grpo_dynamics::advantage::sample_random_rewards;
use grpo_dynamics::clip_bounds::{clip_correction_bound, mc_clip_estimate, raw_surrogate_lower_bound, ClipBoundInputs};
use grpo_dynamics::entropy::{atilde_mc, atilde_moment_formulas, collision_bound, collision_frequency_mc};
use grpo_dynamics::misalign::{damage_moments, MisalignConfig, MomentMethod};
use grpo_dynamics::sim::{run_training, InitialPolicy, RewardMode, SimConfig};
use grpo_dynamics::stats::{par_trials, Moments};
use grpo_dynamics::{HyperParams, Policy};

#[test]
fn reward_bits_are_fair() {
    let params = HyperParams::new(16, 0.1, 0.2, 1, 2, 0.5).unwrap();
    let [m] = par_trials(1_000_000, 3, |_, rng| {
        let r = sample_random_rewards(&params, rng);
        [r.successes() as f64 / 16.0]
    });
    // Per-entry Bernoulli(1/2) over 1.6e7 draws: 3σ ≈ 3.75e-4.
    assert!((m.mean - 0.5).abs() < 0.002, "{}", m.mean);
    assert!(m.estimate().within(0.5, 3.0), "{:?}", m.estimate());
}

#[test]
fn atilde_variance_and_covariance_match_formulas() {
    for (w, g) in [(vec![0.2, 0.3, 0.5], 4), (vec![0.05, 0.15, 0.3, 0.5], 8), (vec![0.9, 0.1], 16)] {
        let pi = Policy::from_weights(&w).unwrap();
        let params = HyperParams::new(g, 0.1, 0.2, 1, pi.len(), pi.min_prob()).unwrap();
        let formulas = atilde_moment_formulas(&params, &pi).unwrap();
        let (cov, var) = atilde_mc(&pi, &params, 1_000_000, 17);
        assert!(var.within(formulas.e_var, 3.0), "{w:?} G={g}: {var:?} vs {}", formulas.e_var);
        assert!(cov.within(0.0, 3.0), "{w:?} G={g}: {cov:?}");
    }
}

#[test]
fn collision_frequency_below_bound() {
    for (v, g, floor_mult) in [(50, 8, 0.5), (200, 16, 0.8), (20, 4, 1.0)] {
        let w: Vec<f64> = (0..v).map(|i| 1.0 + (i % 7) as f64).collect();
        let pi = Policy::from_weights(&w).unwrap();
        let pi_hat = pi.min_prob() * (1.0 + floor_mult);
        let est = collision_frequency_mc(&pi, g, pi_hat, 200_000, 5);
        let bound = collision_bound(g, v, pi_hat);
        assert!(est.mean <= bound + 3.0 * est.std_err, "{est:?} vs {bound}");
    }
}

#[test]
fn clip_correction_and_raw_signal_bounds_hold() {
    let mut activated = 0;
    for &v in &[4usize, 10] {
        for &l in &[4usize, 16] {
            for &eta_frac in &[0.05, 0.2, 0.5] {
                let pi_min = 0.5 / v as f64;
                let w: Vec<f64> = (0..v).map(|i| 1.0 + i as f64).collect();
                let mut pi = Policy::from_weights(&w).unwrap();
                pi.enforce_floor(pi_min).unwrap();
                let g = 8;
                let eta = eta_frac * pi_min;
                let params = HyperParams::new(g, eta, 0.2, l, v, pi_min).unwrap();
                let mc = mc_clip_estimate(&pi, &params, 40_000, 23).unwrap();
                let m = ((g - 1) as f64).sqrt();
                let p_plus = mc.activation.mean;
                if p_plus > 0.0 {
                    activated += 1;
                }
                let inp = ClipBoundInputs::new(params, p_plus, mc.mean_abs_advantage.mean, m).unwrap();
                let bound = clip_correction_bound(&inp);
                assert!(
                    mc.ctot.mean <= bound + 3.0 * mc.ctot.std_err,
                    "|V|={v} L={l} η={eta}: C_tot {:?} > {bound}",
                    mc.ctot
                );
                let lower = raw_surrogate_lower_bound(&inp);
                assert!(
                    mc.nraw.mean >= lower - 3.0 * mc.nraw.std_err,
                    "|V|={v} L={l} η={eta}: N_raw {:?} < {lower}",
                    mc.nraw
                );
            }
        }
    }
    assert!(activated > 0, "grid never activated the cap");
}

#[test]
fn zero_step_size_gives_no_clipping() {
    let pi = Policy::from_weights(&[1.0, 2.0, 3.0]).unwrap();
    let params = HyperParams::new(4, 0.0, 0.2, 8, 3, 0.1).unwrap();
    let mc = mc_clip_estimate(&pi, &params, 2_000, 1).unwrap();
    assert_eq!(mc.ctot.mean, 0.0);
    assert_eq!(mc.activation.mean, 0.0);
    // |N_raw| = L·|A| per rollout when every ratio is 1.
    assert!((mc.nraw.mean - 8.0 * mc.mean_abs_advantage.mean).abs() < 1e-12);
}

#[test]
fn simulated_damage_matches_model_mean() {
    let params = HyperParams::new(16, 0.05, 0.2, 1, 4, 1e-3).unwrap();
    let mut cfg = SimConfig::new(params, InitialPolicy::Uniform);
    cfg.reward_mode = RewardMode::RandomLabels { correct_arm: 0 };
    cfg.steps = 2000;
    cfg.groups_per_step = 4;
    cfg.seed = 99;
    let traj = run_training(&cfg).unwrap();
    let mut resid = Moments::default();
    for obs in &traj.damage_log {
        let n_i = 16 - obs.n_c;
        if obs.n_c == 0 || n_i == 0 {
            // One class is empty, so one of f, g is 0 and its coefficient is 0.
            assert_eq!(obs.delta, 0.0);
            continue;
        }
        let cfg = MisalignConfig::new(obs.n_c, n_i).unwrap();
        let expect = damage_moments::<f64>(&cfg, MomentMethod::ClosedForm).unwrap().mean;
        resid.push(obs.delta - expect);
    }
    assert!(resid.n > 5000);
    assert!(resid.estimate().within(0.0, 3.0), "{:?}", resid.estimate());
}

#[test]
fn true_arm_probability_never_decreases() {
    let params = HyperParams::new(16, 0.05, 0.2, 1, 4, 1e-3).unwrap();
    let mut cfg = SimConfig::new(params, InitialPolicy::Uniform);
    cfg.reward_mode = RewardMode::TrueArm(2);
    cfg.steps = 100;
    let seeds: Vec<u64> = (0..20).collect();
    let runs = grpo_dynamics::sim::run_seeds(&cfg, &seeds).unwrap();
    let mean_at = |k: usize| runs.iter().map(|t| t.records[k].true_arm_prob.unwrap()).sum::<f64>() / runs.len() as f64;
    for k in 1..=100 {
        assert!(mean_at(k) >= mean_at(k - 1) - 1e-12, "step {k}: {} < {}", mean_at(k), mean_at(k - 1));
    }
    assert!(mean_at(100) > 0.25);
}
