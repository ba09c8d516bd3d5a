//! Multi-step GRPO training on a tabular bandit.

use crate::advantage::{categorical, compute_advantages, RewardGroup, RolloutGroup, SignedMass};
use crate::entropy::{entropy, skewness_phi, UpdateMode};
use crate::error::{Error, Result};
use crate::kkt::{clipped_update_mass, KktOptions};
use crate::params::HyperParams;
use crate::policy::Policy;
use crate::rng::stream;
use crate::update::exp_update;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialPolicy {
    Uniform,
    /// `(β, 1-β)`; requires `|V| = 2`.
    TwoArm(f64),
    Explicit(Vec<f64>),
}

impl InitialPolicy {
    pub fn build(&self, vocab_size: usize) -> Result<Policy<f64>> {
        let p = match self {
            InitialPolicy::Uniform => Policy::uniform(vocab_size)?,
            InitialPolicy::TwoArm(beta) => Policy::two_arm(*beta)?,
            InitialPolicy::Explicit(v) => Policy::new(v.clone())?,
        };
        if p.len() != vocab_size {
            return Err(Error::Shape(format!("initial policy has {} arms, |V| = {vocab_size}", p.len())));
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardMode {
    /// i.i.d. Bernoulli(1/2), independent of the rollout.
    Random,
    /// Reward 1 exactly on the given arm.
    TrueArm(usize),
    /// Random rewards, with correctness defined by `correct_arm`; damage is logged.
    RandomLabels { correct_arm: usize },
}

impl RewardMode {
    fn correct_arm(&self) -> Option<usize> {
        match *self {
            RewardMode::Random => None,
            RewardMode::TrueArm(a) | RewardMode::RandomLabels { correct_arm: a } => Some(a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: HyperParams<f64>,
    pub initial: InitialPolicy,
    pub reward_mode: RewardMode,
    pub update_mode: UpdateMode,
    pub steps: usize,
    pub groups_per_step: usize,
    pub seed: u64,
    pub record_every: usize,
    /// Project onto `π ≥ π_min` after every update.
    pub enforce_floor: bool,
    pub keep_snapshots: bool,
}

impl SimConfig {
    pub fn new(params: HyperParams<f64>, initial: InitialPolicy) -> Self {
        Self {
            params,
            initial,
            reward_mode: RewardMode::Random,
            update_mode: UpdateMode::Unclipped,
            steps: 100,
            groups_per_step: 1,
            seed: 0,
            record_every: 1,
            enforce_floor: true,
            keep_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::param("steps", "steps ≥ 1 required"));
        }
        if self.groups_per_step < 1 {
            return Err(Error::param("groups_per_step", "groups_per_step ≥ 1 required"));
        }
        if self.record_every < 1 {
            return Err(Error::param("record_every", "record_every ≥ 1 required"));
        }
        if self.params.rollout_length() != 1 {
            return Err(Error::param("rollout_length", "the simulator runs single-step bandits (L = 1)"));
        }
        if let Some(a) = self.reward_mode.correct_arm() {
            if a >= self.params.vocab_size() {
                return Err(Error::param("correct_arm", format!("arm {a} outside |V| = {}", self.params.vocab_size())));
            }
        }
        self.initial.build(self.params.vocab_size())?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub entropy: f64,
    pub phi: f64,
    pub max_arm: usize,
    pub true_arm_prob: Option<f64>,
    /// Fraction of this step's sampled tokens with `A > 0` and unclipped ratio above `1+ε`.
    pub clip_rate: Option<f64>,
    /// Mean per-group damage over all groups so far.
    pub mean_damage: Option<f64>,
    pub policy: Option<Vec<f64>>,
}

/// Per-group damage observation in random-label mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DamageObservation {
    pub n_c: usize,
    pub f: usize,
    pub g: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub damage_log: Vec<DamageObservation>,
    /// Total L1 mass moved by floor projection.
    pub floor_drift: f64,
    pub final_policy: Vec<f64>,
}

struct StepDraws {
    arms: Vec<usize>,
    rewards: Vec<u8>,
}

/// One step's randomness. Draw order is fixed: for each group, G uniforms for
/// the arms, then G reward bits. Paired runs therefore share common random
/// numbers even when their policies differ.
fn draw_step(pi: &Policy<f64>, cfg: &SimConfig, step: usize) -> Vec<StepDraws> {
    let mut rng = stream(cfg.seed, step as u64);
    let g = cfg.params.group_size();
    (0..cfg.groups_per_step)
        .map(|_| {
            let arms: Vec<usize> = (0..g).map(|_| categorical(pi.probs(), rng.gen::<f64>())).collect();
            let bits: Vec<u8> = (0..g).map(|_| rng.gen_bool(0.5) as u8).collect();
            let rewards = match cfg.reward_mode {
                RewardMode::TrueArm(a) => arms.iter().map(|&y| (y == a) as u8).collect(),
                _ => bits,
            };
            StepDraws { arms, rewards }
        })
        .collect()
}

fn record(
    pi: &Policy<f64>,
    cfg: &SimConfig,
    step: usize,
    clip_rate: Option<f64>,
    damage: Option<f64>,
) -> TrajectoryRecord {
    TrajectoryRecord {
        step,
        entropy: entropy(pi),
        phi: skewness_phi(pi),
        max_arm: pi.argmax(),
        true_arm_prob: cfg.reward_mode.correct_arm().map(|a| pi.probs()[a]),
        clip_rate,
        mean_damage: damage,
        policy: cfg.keep_snapshots.then(|| pi.probs().to_vec()),
    }
}

fn damage_of(arms: &[usize], rewards: &[u8], correct: usize) -> DamageObservation {
    let g = arms.len();
    let n_c = arms.iter().filter(|&&y| y == correct).count();
    let n_i = g - n_c;
    let f = arms.iter().zip(rewards).filter(|(&y, &r)| y != correct && r == 1).count();
    let gg = arms.iter().zip(rewards).filter(|(&y, &r)| y == correct && r == 0).count();
    DamageObservation { n_c, f, g: gg, delta: (n_c * f + n_i * gg) as f64 / g as f64 }
}

/// Runs one trajectory. Bit-reproducible for a given config.
pub fn run_training(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let params = &cfg.params;
    let v = params.vocab_size();
    let eta = params.step_size();
    let cap = 1.0 + params.clip_ratio();
    let opts = KktOptions::default();
    let mut pi = cfg.initial.build(v)?;
    let mut out = Trajectory::default();
    let tracks_damage = matches!(cfg.reward_mode, RewardMode::TrueArm(_) | RewardMode::RandomLabels { .. });
    let mut damage_sum = 0.0;
    out.records.push(record(&pi, cfg, 0, None, tracks_damage.then_some(0.0)));

    for step in 1..=cfg.steps {
        let draws = draw_step(&pi, cfg, step);
        let mut mass = SignedMass::zeros(v);
        let mut positive_tokens = Vec::new();
        for (b, d) in draws.iter().enumerate() {
            let rewards = RewardGroup::new(d.rewards.clone())?;
            let adv = compute_advantages::<f64>(&rewards);
            let rollouts = RolloutGroup::single_step(d.arms.clone(), v)?;
            mass.accumulate_mean(&SignedMass::from_group(&rollouts, &adv, v)?, b);
            positive_tokens.extend(d.arms.iter().zip(&adv.advantages).map(|(&y, &a)| (y, a > 0.0)));
            if let Some(correct) = cfg.reward_mode.correct_arm() {
                let obs = damage_of(&d.arms, &d.rewards, correct);
                damage_sum += obs.delta;
                out.damage_log.push(obs);
            }
        }
        let unclipped = exp_update(&pi, &mass.token_advantage(&pi), eta).map_err(|e| e.at_step(step))?;
        let hits =
            positive_tokens.iter().filter(|&&(y, pos)| pos && unclipped.probs()[y] / pi.probs()[y] > cap).count();
        let clip_rate = hits as f64 / positive_tokens.len() as f64;
        let mut next = match cfg.update_mode {
            UpdateMode::Unclipped => unclipped,
            UpdateMode::Clipped => {
                clipped_update_mass(&pi, &mass, eta, params.clip_ratio(), &opts).map_err(|e| e.at_step(step))?.0
            }
        };
        if cfg.enforce_floor {
            out.floor_drift += next.enforce_floor(params.policy_floor()).map_err(|e| e.at_step(step))?;
        }
        if next.probs().iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::UpdateOverflow { spread: f64::INFINITY }.at_step(step));
        }
        pi = next;
        if step % cfg.record_every == 0 || step == cfg.steps {
            let dmg = tracks_damage.then(|| damage_sum / out.damage_log.len().max(1) as f64);
            out.records.push(record(&pi, cfg, step, Some(clip_rate), dmg));
        }
    }
    out.final_policy = pi.probs().to_vec();
    Ok(out)
}

/// Runs the same config under both update modes on identical random streams.
pub fn paired_clip_experiment(cfg: &SimConfig) -> Result<(Trajectory, Trajectory)> {
    let mut u = cfg.clone();
    u.update_mode = UpdateMode::Unclipped;
    let mut c = cfg.clone();
    c.update_mode = UpdateMode::Clipped;
    let (a, b) = rayon::join(|| run_training(&u), || run_training(&c));
    Ok((a?, b?))
}

/// Runs `cfg` for each seed in parallel; results are returned in seed order.
pub fn run_seeds(cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<Trajectory>> {
    seeds
        .par_iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.seed = s;
            run_training(&c)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub initial_entropy: f64,
    pub final_entropy: f64,
    pub min_entropy: f64,
    pub max_entropy: f64,
    /// Least-squares slope of entropy against step.
    pub entropy_slope: f64,
    pub final_true_arm_prob: Option<f64>,
    pub mean_clip_rate: Option<f64>,
    pub mean_damage: Option<f64>,
}

pub fn summarize(traj: &Trajectory) -> Result<Summary> {
    summarize_records(&traj.records)
}

pub fn summarize_records(records: &[TrajectoryRecord]) -> Result<Summary> {
    let first = records.first().ok_or(Error::EmptyTrajectory)?;
    let last = records.last().ok_or(Error::EmptyTrajectory)?;
    let n = records.len() as f64;
    let xs: Vec<f64> = records.iter().map(|r| r.step as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.entropy).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let rates: Vec<f64> = records.iter().filter_map(|r| r.clip_rate).collect();
    Ok(Summary {
        initial_entropy: first.entropy,
        final_entropy: last.entropy,
        min_entropy: ys.iter().copied().fold(f64::INFINITY, f64::min),
        max_entropy: ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        entropy_slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
        final_true_arm_prob: last.true_arm_prob,
        mean_clip_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
        mean_damage: last.mean_damage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(beta: f64, eta: f64) -> SimConfig {
        let p = HyperParams::<f64>::new(16, eta, 0.2, 1, 2, 1e-3).unwrap();
        let mut c = SimConfig::new(p, InitialPolicy::TwoArm(beta));
        c.steps = 50;
        c
    }

    #[test]
    fn zero_eta_is_constant() {
        let t = run_training(&base(0.3, 0.0)).unwrap();
        assert!(t.records.iter().all(|r| r.entropy == t.records[0].entropy));
    }

    #[test]
    fn deterministic() {
        let c = base(0.7, 0.1);
        assert_eq!(run_training(&c).unwrap(), run_training(&c).unwrap());
    }

    #[test]
    fn record_cadence() {
        let mut c = base(0.5, 0.05);
        c.steps = 1;
        assert_eq!(run_training(&c).unwrap().records.len(), 2);
        c.steps = 10;
        c.record_every = 4;
        let steps: Vec<usize> = run_training(&c).unwrap().records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
    }

    #[test]
    fn tiny_eta_pairs_coincide() {
        let c = base(0.5, 1e-6);
        let (u, k) = paired_clip_experiment(&c).unwrap();
        for (a, b) in u.records.iter().zip(&k.records) {
            assert!((a.entropy - b.entropy).abs() < 1e-10);
            assert_eq!(a.clip_rate.unwrap_or(0.0), 0.0);
        }
    }

    #[test]
    fn summary_slopes() {
        let mk = |e: &[f64]| -> Vec<TrajectoryRecord> {
            e.iter()
                .enumerate()
                .map(|(i, &h)| TrajectoryRecord {
                    step: i,
                    entropy: h,
                    phi: 0.0,
                    max_arm: 0,
                    true_arm_prob: None,
                    clip_rate: None,
                    mean_damage: None,
                    policy: None,
                })
                .collect()
        };
        assert_eq!(summarize_records(&mk(&[0.5, 0.5, 0.5])).unwrap().entropy_slope, 0.0);
        assert!(summarize_records(&mk(&[0.1, 0.2, 0.4])).unwrap().entropy_slope > 0.0);
        assert!(matches!(summarize_records(&[]), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn rejects_bad_arm() {
        let mut c = base(0.5, 0.1);
        c.reward_mode = RewardMode::TrueArm(2);
        assert!(run_training(&c).is_err());
    }
}
