//! Reward-misalignment model: damage `Δ(f,g)` and its exact moments.
//!
//! A group has `n_c` correct and `n_i` incorrect rollouts. Under random
//! rewards, `f ~ Bin(n_i, 1/2)` incorrect rollouts are rewarded and
//! `g ~ Bin(n_c, 1/2)` correct ones are not. Everything here is generic
//! over [`Field`] so the identities can be checked in exact arithmetic.

use crate::error::{Error, Result};
use crate::scalar::{binomial, Field};
use serde::{Deserialize, Serialize};

/// Cell oracle limit per class.
pub const MAX_CLASS: usize = 30;
/// Raw reward-vector oracle limit on G.
pub const MAX_RAW_GROUP: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisalignConfig {
    n_c: usize,
    n_i: usize,
}

impl MisalignConfig {
    pub fn new(n_c: usize, n_i: usize) -> Result<Self> {
        if n_c < 1 {
            return Err(Error::param("n_c", "n_c ≥ 1 required"));
        }
        if n_i < 1 {
            return Err(Error::param("n_i", "n_i ≥ 1 required"));
        }
        Ok(Self { n_c, n_i })
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }
    pub fn n_i(&self) -> usize {
        self.n_i
    }
    pub fn g(&self) -> usize {
        self.n_c + self.n_i
    }

    fn check_cells(&self) -> Result<()> {
        if self.n_c > MAX_CLASS || self.n_i > MAX_CLASS {
            return Err(Error::BudgetExceeded {
                what: "binomial cell enumeration",
                needed: ((self.n_c + 1) * (self.n_i + 1)) as f64,
                limit: ((MAX_CLASS + 1) * (MAX_CLASS + 1)) as f64,
            });
        }
        Ok(())
    }
}

fn int<F: Field>(n: usize) -> F {
    F::from_int(n as i128)
}

/// `Δ(f,g) = (n_c·f + n_i·g)/G`.
pub fn damage<F: Field>(f: usize, g: usize, cfg: &MisalignConfig) -> Result<F> {
    if f > cfg.n_i {
        return Err(Error::CountOutOfRange { what: "f", value: f, max: cfg.n_i });
    }
    if g > cfg.n_c {
        return Err(Error::CountOutOfRange { what: "g", value: g, max: cfg.n_c });
    }
    Ok(int::<F>(cfg.n_c * f + cfg.n_i * g) / int(cfg.g()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentMethod {
    ClosedForm,
    CellOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DamageMoments<F> {
    pub mean: F,
    pub variance: F,
}

/// Mean `n_c·n_i/G` and variance `n_c·n_i/(4G)`, in closed form or by cells.
pub fn damage_moments<F: Field>(cfg: &MisalignConfig, method: MomentMethod) -> Result<DamageMoments<F>> {
    match method {
        MomentMethod::ClosedForm => {
            let prod = int::<F>(cfg.n_c * cfg.n_i);
            Ok(DamageMoments { mean: prod.clone() / int(cfg.g()), variance: prod / int(4 * cfg.g()) })
        }
        MomentMethod::CellOracle => {
            let cells = Cells::<F>::binomial(cfg)?;
            let s = cells.sums(|_, _| true);
            let mean = s.d1.clone();
            Ok(DamageMoments { variance: s.d2 - mean.clone() * mean.clone(), mean })
        }
    }
}

/// Joint weights of `(f, g)` plus the damage at each cell.
struct Cells<F> {
    cfg: MisalignConfig,
    weight: Vec<Vec<F>>,
    delta: Vec<Vec<F>>,
}

#[derive(Clone)]
struct Sums<F> {
    p: F,
    d1: F,
    d2: F,
}

impl<F: Field> Cells<F> {
    fn binomial(cfg: &MisalignConfig) -> Result<Self> {
        cfg.check_cells()?;
        let total = F::from_int(1i128 << cfg.g());
        let weight = (0..=cfg.n_i)
            .map(|f| {
                (0..=cfg.n_c)
                    .map(|g| {
                        F::from_int((binomial(cfg.n_i as u32, f as u32) * binomial(cfg.n_c as u32, g as u32)) as i128)
                            / total.clone()
                    })
                    .collect()
            })
            .collect();
        Self::with_weights(cfg, weight)
    }

    fn with_weights(cfg: &MisalignConfig, weight: Vec<Vec<F>>) -> Result<Self> {
        let mut delta = Vec::with_capacity(cfg.n_i + 1);
        for f in 0..=cfg.n_i {
            let mut row = Vec::with_capacity(cfg.n_c + 1);
            for g in 0..=cfg.n_c {
                row.push(damage::<F>(f, g, cfg)?);
            }
            delta.push(row);
        }
        Ok(Self { cfg: *cfg, weight, delta })
    }

    fn sums(&self, pred: impl Fn(usize, usize) -> bool) -> Sums<F> {
        let mut s = Sums { p: F::zero(), d1: F::zero(), d2: F::zero() };
        for f in 0..=self.cfg.n_i {
            for g in 0..=self.cfg.n_c {
                if pred(f, g) {
                    let w = self.weight[f][g].clone();
                    let d = self.delta[f][g].clone();
                    s.p = s.p + w.clone();
                    s.d1 = s.d1 + w.clone() * d.clone();
                    s.d2 = s.d2 + w * d.clone() * d;
                }
            }
        }
        s
    }

    fn conditional_variance(&self, pred: impl Fn(usize, usize) -> bool) -> F {
        let s = self.sums(pred);
        if s.p == F::zero() {
            return F::zero();
        }
        let m = s.d1 / s.p.clone();
        s.d2 / s.p - m.clone() * m
    }
}

/// Full set of unconditional and conditional damage statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DamageStats<F> {
    pub mean: F,
    pub variance: F,
    /// `E[Δ·1{f>g}]`
    pub e_delta_f_gt_g: F,
    /// `E[Δ·1{g>f}]`
    pub e_delta_g_gt_f: F,
    pub p_f_gt_g: F,
    pub p_g_gt_f: F,
    pub var_given_f_gt_g: F,
    pub var_given_g_gt_f: F,
    /// `Var(Δ | f>g)` from `Var(Δ | Z=z)` averaged over `z > n_c`, where `Z = f + n_c - g`.
    pub var_given_f_gt_g_decomposed: F,
    pub var_given_g_gt_f_decomposed: F,
    /// `E[Δ | f>g]`, `E[Δ | g>f]`; both equal `n_c·n_i/G`.
    pub mean_given_f_gt_g: F,
    pub mean_given_g_gt_f: F,
}

impl<F: Field> DamageStats<F> {
    /// The ordering statements for `n_c > n_i`: `E[Δ1{f>g}] ≤ E[Δ1{g>f}]`
    /// and `Var(Δ|f>g) < Var(Δ|g>f)`.
    pub fn ordering_holds(&self) -> bool {
        self.e_delta_f_gt_g <= self.e_delta_g_gt_f && self.var_given_f_gt_g < self.var_given_g_gt_f
    }

    /// `E[Δ·1{f>g}]/E[Δ]`.
    pub fn fraction_f_gt_g(&self) -> F {
        self.e_delta_f_gt_g.clone() / self.mean.clone()
    }
}

/// `Var(Δ | Z = z) = (n_i(G - n_i)/(G - 1))·z(G - z)/G²`.
pub fn conditional_variance_given_z<F: Field>(cfg: &MisalignConfig, z: usize) -> F {
    let g = cfg.g();
    let zz = z.min(g);
    int::<F>(cfg.n_i * (g - cfg.n_i)) / int(g - 1) * int(zz * (g - zz)) / int(g * g)
}

fn decomposed_variance<F: Field>(cfg: &MisalignConfig, pred: impl Fn(usize) -> bool) -> F {
    let g = cfg.g();
    let (mut p, mut acc) = (F::zero(), F::zero());
    for z in 0..=g {
        if pred(z) {
            let w = F::from_int(binomial(g as u32, z as u32) as i128);
            p = p + w.clone();
            acc = acc + w * conditional_variance_given_z::<F>(cfg, z);
        }
    }
    if p == F::zero() {
        F::zero()
    } else {
        acc / p
    }
}

/// Exact conditional statistics by binomial cells.
pub fn conditional_damage<F: Field>(cfg: &MisalignConfig) -> Result<DamageStats<F>> {
    let cells = Cells::<F>::binomial(cfg)?;
    stats_from_cells(cfg, &cells)
}

fn stats_from_cells<F: Field>(cfg: &MisalignConfig, cells: &Cells<F>) -> Result<DamageStats<F>> {
    let all = cells.sums(|_, _| true);
    let fg = cells.sums(|f, g| f > g);
    let gf = cells.sums(|f, g| g > f);
    let mean = all.d1.clone();
    let cond_mean = |s: &Sums<F>| if s.p == F::zero() { F::zero() } else { s.d1.clone() / s.p.clone() };
    let n_c = cfg.n_c;
    Ok(DamageStats {
        variance: all.d2 - mean.clone() * mean.clone(),
        mean,
        mean_given_f_gt_g: cond_mean(&fg),
        mean_given_g_gt_f: cond_mean(&gf),
        e_delta_f_gt_g: fg.d1,
        e_delta_g_gt_f: gf.d1,
        p_f_gt_g: fg.p,
        p_g_gt_f: gf.p,
        var_given_f_gt_g: cells.conditional_variance(|f, g| f > g),
        var_given_g_gt_f: cells.conditional_variance(|f, g| g > f),
        var_given_f_gt_g_decomposed: decomposed_variance(cfg, |z| z > n_c),
        var_given_g_gt_f_decomposed: decomposed_variance(cfg, |z| z < n_c),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionRow<F> {
    pub n_c: usize,
    pub fraction: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionScan<F> {
    pub group_size: usize,
    pub rows: Vec<FractionRow<F>>,
    pub strictly_decreasing: bool,
}

/// `E[Δ1{f>g}]/E[Δ]` for `n_c = ⌈G/2⌉ … G-1`.
pub fn fraction_monotonicity_scan<F: Field>(group_size: usize) -> Result<FractionScan<F>> {
    if !(2..=60).contains(&group_size) {
        return Err(Error::param("group_size", format!("2 ≤ G ≤ 60 required, got {group_size}")));
    }
    let mut rows = Vec::new();
    for n_c in group_size.div_ceil(2)..group_size {
        let cfg = MisalignConfig::new(n_c, group_size - n_c)?;
        // The cell weights need C(n,k) ≤ 2^60, fine for G ≤ 60 without the per-class cap.
        let total = F::from_int(1i128 << group_size);
        let weight = (0..=cfg.n_i)
            .map(|f| {
                (0..=cfg.n_c)
                    .map(|g| {
                        F::from_int((binomial(cfg.n_i as u32, f as u32) * binomial(cfg.n_c as u32, g as u32)) as i128)
                            / total.clone()
                    })
                    .collect()
            })
            .collect();
        let cells = Cells::with_weights(&cfg, weight)?;
        let all = cells.sums(|_, _| true);
        let fg = cells.sums(|f, g| f > g);
        rows.push(FractionRow { n_c, fraction: fg.d1 / all.d1 });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].fraction < w[0].fraction);
    Ok(FractionScan { group_size, rows, strictly_decreasing })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Mean,
    Variance,
    EDeltaFGtG,
    EDeltaGGtF,
    PFGtG,
    PGGtF,
    VarGivenFGtG,
    VarGivenGGtF,
    MeanGivenZ(usize),
    VarGivenZ(usize),
}

/// Brute force over all `2^G` reward vectors. Rollouts `0..n_c` are the
/// correct ones; `f` counts rewarded incorrect rollouts and `g` unrewarded
/// correct ones. Vectors are tallied per `(f, g)` and the statistic is read
/// off the tallies.
pub fn reward_vector_oracle<F: Field>(cfg: &MisalignConfig, statistic: Statistic) -> Result<F> {
    let g_size = cfg.g();
    if g_size > MAX_RAW_GROUP {
        return Err(Error::BudgetExceeded {
            what: "reward-vector enumeration",
            needed: 2f64.powi(g_size as i32),
            limit: 2f64.powi(MAX_RAW_GROUP as i32),
        });
    }
    let correct_mask: u64 = (1u64 << cfg.n_c) - 1;
    let mut tally = vec![vec![0u64; cfg.n_c + 1]; cfg.n_i + 1];
    for rewards in 0..(1u64 << g_size) {
        let f = (rewards & !correct_mask).count_ones() as usize;
        let g = cfg.n_c - (rewards & correct_mask).count_ones() as usize;
        tally[f][g] += 1;
    }
    let total = F::from_int(1i128 << g_size);
    let weight: Vec<Vec<F>> =
        tally.iter().map(|row| row.iter().map(|&c| F::from_int(c as i128) / total.clone()).collect()).collect();
    let cells = Cells::with_weights(cfg, weight)?;
    let n_c = cfg.n_c;
    let z_of = move |f: usize, g: usize| f + n_c - g;
    let stats = stats_from_cells(cfg, &cells)?;
    Ok(match statistic {
        Statistic::Mean => stats.mean,
        Statistic::Variance => stats.variance,
        Statistic::EDeltaFGtG => stats.e_delta_f_gt_g,
        Statistic::EDeltaGGtF => stats.e_delta_g_gt_f,
        Statistic::PFGtG => stats.p_f_gt_g,
        Statistic::PGGtF => stats.p_g_gt_f,
        Statistic::VarGivenFGtG => stats.var_given_f_gt_g,
        Statistic::VarGivenGGtF => stats.var_given_g_gt_f,
        Statistic::MeanGivenZ(z) => {
            let s = cells.sums(|f, g| z_of(f, g) == z);
            if s.p == F::zero() {
                F::zero()
            } else {
                s.d1 / s.p
            }
        }
        Statistic::VarGivenZ(z) => cells.conditional_variance(|f, g| z_of(f, g) == z),
    })
}
