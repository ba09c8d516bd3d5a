//! Random rewards, group-normalized advantages and token advantages.

use crate::enumerate::par_sum;
use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::policy::Policy;
use crate::scalar::{binomial, Real};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest group size the 2^G enumeration oracles accept.
pub const MAX_ENUM_GROUP: usize = 24;

/// Binary rewards of one group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardGroup {
    rewards: Vec<u8>,
}

impl RewardGroup {
    pub fn new(rewards: Vec<u8>) -> Result<Self> {
        if rewards.len() < 2 {
            return Err(Error::Shape(format!("group needs G ≥ 2 rewards, got {}", rewards.len())));
        }
        if let Some(bad) = rewards.iter().position(|&r| r > 1) {
            return Err(Error::Shape(format!("reward {bad} is {} (expected 0 or 1)", rewards[bad])));
        }
        Ok(Self { rewards })
    }

    /// Reward vector whose bit `i` of `mask` is the reward of rollout `i`.
    pub fn from_mask(mask: u64, g: usize) -> Self {
        Self { rewards: (0..g).map(|i| ((mask >> i) & 1) as u8).collect() }
    }

    pub fn rewards(&self) -> &[u8] {
        &self.rewards
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Number of positive rewards K.
    pub fn successes(&self) -> usize {
        self.rewards.iter().filter(|&&r| r == 1).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup<T = f64> {
    pub advantages: Vec<T>,
    /// All rewards equal; advantages are then all zero.
    pub degenerate: bool,
}

impl<T: Real> AdvantageGroup<T> {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }

    pub fn from_values(advantages: Vec<T>) -> Self {
        let degenerate = advantages.iter().all(|a| *a == T::zero());
        Self { advantages, degenerate }
    }
}

/// G rollouts of length L, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutGroup {
    tokens: Vec<usize>,
    group_size: usize,
    rollout_length: usize,
    pub correct_arm: Option<usize>,
}

impl RolloutGroup {
    pub fn new(tokens: Vec<usize>, group_size: usize, rollout_length: usize, vocab_size: usize) -> Result<Self> {
        if group_size == 0 || rollout_length == 0 {
            return Err(Error::Shape("empty rollout group".into()));
        }
        if tokens.len() != group_size * rollout_length {
            return Err(Error::Shape(format!(
                "expected {}×{} tokens, got {}",
                group_size,
                rollout_length,
                tokens.len()
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::Shape(format!("token {bad} outside vocabulary of size {vocab_size}")));
        }
        Ok(Self { tokens, group_size, rollout_length, correct_arm: None })
    }

    /// Single-step rollouts (`L = 1`).
    pub fn single_step(arms: Vec<usize>, vocab_size: usize) -> Result<Self> {
        let g = arms.len();
        Self::new(arms, g, 1, vocab_size)
    }

    pub fn with_correct_arm(mut self, arm: usize) -> Self {
        self.correct_arm = Some(arm);
        self
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn rollout_length(&self) -> usize {
        self.rollout_length
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.tokens[i * self.rollout_length..(i + 1) * self.rollout_length]
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }
}

/// Ã(a) together with how often each token was visited.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenAdvantage<T = f64> {
    pub values: Vec<T>,
    pub visit_counts: Vec<u64>,
}

impl<T: Real> TokenAdvantage<T> {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![T::zero(); n], visit_counts: vec![0; n] }
    }

    /// Direct construction, e.g. for synthetic Ã in tests.
    pub fn from_values(values: Vec<T>) -> Self {
        let n = values.len();
        Self { values, visit_counts: vec![0; n] }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Per-token sums of positive and negative advantages, divided by G:
/// `plus(a) = S_+(a)/G`, `minus(a) = S_-(a)/G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedMass<T = f64> {
    pub minus: Vec<T>,
    pub plus: Vec<T>,
}

impl<T: Real> SignedMass<T> {
    pub fn zeros(n: usize) -> Self {
        Self { minus: vec![T::zero(); n], plus: vec![T::zero(); n] }
    }

    pub fn from_group(rollouts: &RolloutGroup, adv: &AdvantageGroup<T>, vocab_size: usize) -> Result<Self> {
        if adv.len() != rollouts.group_size() {
            return Err(Error::Shape(format!("{} advantages for {} rollouts", adv.len(), rollouts.group_size())));
        }
        let mut out = Self::zeros(vocab_size);
        let g = T::from_usize_lossy(rollouts.group_size());
        for (i, &a) in adv.advantages.iter().enumerate() {
            for &tok in rollouts.row(i) {
                if tok >= vocab_size {
                    return Err(Error::Shape(format!("token {tok} outside vocabulary of size {vocab_size}")));
                }
                if a > T::zero() {
                    out.plus[tok] += a / g;
                } else {
                    out.minus[tok] += a / g;
                }
            }
        }
        Ok(out)
    }

    /// Running average: folds `other` in as the `(n+1)`-th sample.
    pub fn accumulate_mean(&mut self, other: &Self, n_before: usize) {
        let w = T::from_usize_lossy(n_before);
        let d = T::from_usize_lossy(n_before + 1);
        for (a, b) in self.minus.iter_mut().zip(&other.minus) {
            *a = (*a * w + *b) / d;
        }
        for (a, b) in self.plus.iter_mut().zip(&other.plus) {
            *a = (*a * w + *b) / d;
        }
    }

    /// Ã implied by the masses under `π_old`.
    pub fn token_advantage(&self, pi_old: &Policy<T>) -> TokenAdvantage<T> {
        let values =
            self.minus.iter().zip(&self.plus).zip(pi_old.probs()).map(|((&m, &p), &pi)| (m + p) / pi).collect();
        TokenAdvantage { values, visit_counts: vec![0; pi_old.len()] }
    }

    pub fn len(&self) -> usize {
        self.minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minus.is_empty()
    }
}

/// G i.i.d. Bernoulli(1/2) rewards.
pub fn sample_random_rewards<T: Real, R: Rng + ?Sized>(params: &HyperParams<T>, rng: &mut R) -> RewardGroup {
    RewardGroup { rewards: (0..params.group_size()).map(|_| rng.gen_bool(0.5) as u8).collect() }
}

/// Inverse-CDF draw from `probs` with one uniform.
pub fn categorical<T: Real>(probs: &[T], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// G rollouts of length L from a context-free policy; one uniform per token, row-major.
pub fn sample_rollouts<T: Real, R: Rng + ?Sized>(
    policy: &Policy<T>,
    group_size: usize,
    rollout_length: usize,
    rng: &mut R,
) -> RolloutGroup {
    let tokens = (0..group_size * rollout_length).map(|_| categorical(policy.probs(), rng.gen::<f64>())).collect();
    RolloutGroup { tokens, group_size, rollout_length, correct_arm: None }
}

/// `A_i = (r_i - mean)/std` with the population std. Written as
/// `(G·r_i - K)/√(K(G-K))` so that complementary reward vectors give
/// exactly negated advantages.
pub fn compute_advantages<T: Real>(rewards: &RewardGroup) -> AdvantageGroup<T> {
    let g = rewards.len();
    let k = rewards.successes();
    if k == 0 || k == g {
        return AdvantageGroup { advantages: vec![T::zero(); g], degenerate: true };
    }
    let scale = T::from_usize_lossy(k * (g - k)).sqrt();
    let advantages = rewards
        .rewards()
        .iter()
        .map(|&r| {
            let num = (g * r as usize) as i64 - k as i64;
            T::lit(num as f64) / scale
        })
        .collect();
    AdvantageGroup { advantages, degenerate: false }
}

/// `Ã(a) = (1/G)·Σ_i Σ_t 1{y_t^(i)=a}·A_i / π_old(a)`.
pub fn token_advantage<T: Real>(
    rollouts: &RolloutGroup,
    adv: &AdvantageGroup<T>,
    pi_old: &Policy<T>,
) -> Result<TokenAdvantage<T>> {
    if adv.len() != rollouts.group_size() {
        return Err(Error::Shape(format!("{} advantages for {} rollouts", adv.len(), rollouts.group_size())));
    }
    let n = pi_old.len();
    let g = T::from_usize_lossy(rollouts.group_size());
    let mut out = TokenAdvantage::zeros(n);
    for (i, &a) in adv.advantages.iter().enumerate() {
        for &tok in rollouts.row(i) {
            if tok >= n {
                return Err(Error::Shape(format!("token {tok} outside vocabulary of size {n}")));
            }
            out.values[tok] += a;
            out.visit_counts[tok] += 1;
        }
    }
    for (index, (v, &p)) in out.values.iter_mut().zip(pi_old.probs()).enumerate() {
        if !(p > T::zero()) {
            return Err(Error::NonPositiveProbability { index, value: p.to_f64_lossy() });
        }
        *v /= g * p;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentKind {
    /// `E|A_1|^k`
    Absolute,
    /// `E[A_1^k]`
    Signed,
}

fn check_enum_group(g: usize) -> Result<()> {
    if !(2..=MAX_ENUM_GROUP).contains(&g) {
        return Err(Error::BudgetExceeded {
            what: "advantage enumeration",
            needed: 2f64.powi(g as i32),
            limit: 2f64.powi(MAX_ENUM_GROUP as i32),
        });
    }
    Ok(())
}

/// Exact moment of `A_1` by enumerating all `2^G` reward vectors.
///
/// Each mask is paired with its complement; the complement's advantages are
/// the exact negation, so signed odd moments cancel to exactly zero.
pub fn advantage_moment_oracle(g: usize, k: u32, kind: MomentKind) -> Result<f64> {
    check_enum_group(g)?;
    if k == 0 {
        return Err(Error::param("k", "moment order k ≥ 1 required"));
    }
    let full = (1u64 << g) - 1;
    let half = 1u64 << (g - 1);
    let moment = |mask: u64| -> f64 {
        let a = compute_advantages::<f64>(&RewardGroup::from_mask(mask, g)).advantages[0];
        match kind {
            MomentKind::Absolute => a.abs().powi(k as i32),
            MomentKind::Signed => a.powi(k as i32),
        }
    };
    let total = par_sum(half, |m| moment(m) + moment(m ^ full));
    Ok(total / (1u64 << g) as f64)
}

/// Largest |A_1| over all reward vectors, by enumeration.
pub fn advantage_max_abs_oracle(g: usize) -> Result<f64> {
    check_enum_group(g)?;
    let mut best: f64 = 0.0;
    for mask in 0..(1u64 << g) {
        let a = compute_advantages::<f64>(&RewardGroup::from_mask(mask, g));
        for v in a.advantages {
            best = best.max(v.abs());
        }
    }
    Ok(best)
}

/// `E|A| = (2/(G·2^G))·Σ_{K=1}^{G-1} C(G,K)·√(K(G-K))`.
pub fn closed_form_mean_abs(g: usize) -> f64 {
    let gg = g as u32;
    let s: f64 = (1..gg).map(|k| binomial(gg, k) as f64 * ((k * (gg - k)) as f64).sqrt()).sum();
    2.0 * s / (g as f64 * 2f64.powi(g as i32))
}

/// Moments of the advantage distribution used by the entropy bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageMoments {
    pub group_size: usize,
    /// `E|A_1|`
    pub abs1: f64,
    /// `E[A_1^2] = 1 - 2^{1-G}`
    pub second: f64,
    /// `E[A_1^4]`
    pub fourth: f64,
    /// `E[A_1^2 A_2^2]`
    pub cross22: f64,
    /// `max |A_1| = √(G-1)`
    pub max_abs: f64,
}

/// Exact moments by summing over the success count K with binomial weights.
/// Valid for `2 ≤ G ≤ 60`.
pub fn advantage_moments(g: usize) -> Result<AdvantageMoments> {
    if !(2..=60).contains(&g) {
        return Err(Error::param("group_size", format!("2 ≤ G ≤ 60 required, got {g}")));
    }
    let gf = g as f64;
    let total = 2f64.powi(g as i32);
    let (mut abs1, mut second, mut fourth, mut cross22, mut max_abs) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for k in 1..g {
        let w = binomial(g as u32, k as u32) as f64 / total;
        let kf = k as f64;
        let s = (kf * (gf - kf)).sqrt();
        let pos = (gf - kf) / s;
        let neg = kf / s;
        abs1 += w * (kf * pos + (gf - kf) * neg) / gf;
        second += w * (kf * pos * pos + (gf - kf) * neg * neg) / gf;
        fourth += w * (kf * pos.powi(4) + (gf - kf) * neg.powi(4)) / gf;
        cross22 += w
            * (kf * (kf - 1.0) * pos.powi(4)
                + 2.0 * kf * (gf - kf) * pos * pos * neg * neg
                + (gf - kf) * (gf - kf - 1.0) * neg.powi(4))
            / (gf * (gf - 1.0));
        max_abs = max_abs.max(pos).max(neg);
    }
    Ok(AdvantageMoments { group_size: g, abs1, second, fourth, cross22, max_abs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn half_split() {
        let a = compute_advantages::<f64>(&RewardGroup::new(vec![1, 1, 0, 0]).unwrap());
        assert_eq!(a.advantages, vec![1.0, 1.0, -1.0, -1.0]);
        assert!(!a.degenerate);
    }

    #[test]
    fn degenerate_group() {
        let a = compute_advantages::<f64>(&RewardGroup::new(vec![1, 1, 1, 1]).unwrap());
        assert_eq!(a.advantages, vec![0.0; 4]);
        assert!(a.degenerate);
    }

    #[test]
    fn lone_success() {
        let a = compute_advantages::<f64>(&RewardGroup::new(vec![1, 0, 0, 0]).unwrap());
        let expect = [3f64.sqrt(), -1.0 / 3f64.sqrt(), -1.0 / 3f64.sqrt(), -1.0 / 3f64.sqrt()];
        for (x, y) in a.advantages.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_nonbinary() {
        assert!(RewardGroup::new(vec![0, 2]).is_err());
        assert!(RewardGroup::new(vec![1]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = HyperParams::<f64>::new(16, 0.1, 0.2, 1, 2, 0.1).unwrap();
        let a = sample_random_rewards(&p, &mut stream(42, 0));
        let b = sample_random_rewards(&p, &mut stream(42, 0));
        assert_eq!(a, b);
        assert!(a.rewards().iter().all(|&r| r <= 1));
    }

    #[test]
    fn two_arm_token_advantage() {
        let r = RolloutGroup::single_step(vec![0, 1], 2).unwrap();
        let adv = AdvantageGroup { advantages: vec![1.0, -1.0], degenerate: false };
        let pi = Policy::<f64>::new(vec![0.5, 0.5]).unwrap();
        let t = token_advantage(&r, &adv, &pi).unwrap();
        assert_eq!(t.values, vec![1.0, -1.0]);
        assert_eq!(t.visit_counts, vec![1, 1]);
    }

    #[test]
    fn zero_advantage_gives_zero_tokens() {
        let r = RolloutGroup::single_step(vec![0, 1, 1], 3).unwrap();
        let adv = AdvantageGroup { advantages: vec![0.0; 3], degenerate: true };
        let pi = Policy::<f64>::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(token_advantage(&r, &adv, &pi).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn oracle_known_values() {
        assert!((advantage_moment_oracle(2, 2, MomentKind::Absolute).unwrap() - 0.5).abs() < 1e-15);
        let g4 = advantage_moment_oracle(4, 1, MomentKind::Absolute).unwrap();
        assert!((g4 - 0.80801).abs() < 1e-5, "{g4}");
        let g16 = advantage_moment_oracle(16, 1, MomentKind::Absolute).unwrap();
        assert!((g16 - 0.9670613024392241).abs() < 1e-13, "{g16}");
    }

    #[test]
    fn oracle_rejects_large_group() {
        assert!(matches!(advantage_moment_oracle(25, 1, MomentKind::Signed), Err(Error::BudgetExceeded { .. })));
        assert!(advantage_moment_oracle(1, 1, MomentKind::Signed).is_err());
    }

    #[test]
    fn k_sum_moments_g16() {
        let m = advantage_moments(16).unwrap();
        assert!((m.abs1 - 0.9670613024392241).abs() < 1e-14);
        assert!((m.second - 0.999969482421875).abs() < 1e-14);
        assert!((m.fourth - 1.3176466078138442).abs() < 1e-12);
        assert!((m.cross22 - 0.9787910073957437).abs() < 1e-12);
        assert!((m.max_abs - 15f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn signed_mass_matches_token_advantage() {
        let r = RolloutGroup::single_step(vec![0, 2, 2, 1], 3).unwrap();
        let adv = compute_advantages::<f64>(&RewardGroup::new(vec![1, 0, 1, 0]).unwrap());
        let pi = Policy::<f64>::new(vec![0.2, 0.3, 0.5]).unwrap();
        let direct = token_advantage(&r, &adv, &pi).unwrap();
        let via = SignedMass::from_group(&r, &adv, 3).unwrap().token_advantage(&pi);
        for (a, b) in direct.values.iter().zip(&via.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
