//! Flat `key = value` configuration, layered defaults < preset < file < flags.

use crate::LabError;
use grpo_dynamics::clip_bounds::Magnitude;
use grpo_dynamics::entropy::{skewness_phi, RemainderConvention, UpdateMode};
use grpo_dynamics::presets::{BoundsInputs, PHI_MIN_REMARK};
use grpo_dynamics::sim::{InitialPolicy, RewardMode, SimConfig};
use grpo_dynamics::{HyperParams, Policy};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Every accepted key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("group_size", "16"),
    ("step_size", "0.05"),
    ("clip_ratio", "0.2"),
    ("rollout_length", "1"),
    ("vocab_size", "2"),
    ("policy_floor", "1e-3"),
    ("seed", "0"),
    // bounds
    ("activation_rate", "0.001"),
    ("mean_abs_advantage", "exact"),
    ("magnitude", "sample_std"),
    ("rho", "0.001"),
    ("delta", "10"),
    ("threshold_p", "2e-3"),
    ("pi_hat", "2e-3"),
    ("phi", "initial"),
    ("remainder_convention", "remark"),
    // policy and simulation
    ("initial", "two_arm"),
    ("beta", "0.5"),
    ("initial_probs", ""),
    ("reward_mode", "random"),
    ("correct_arm", "0"),
    ("update_mode", "unclipped"),
    ("steps", "100"),
    ("groups_per_step", "1"),
    ("record_every", "1"),
    ("enforce_floor", "true"),
    // misalignment
    ("n_c", "12"),
    ("n_i", "4"),
];

pub const PRESETS: &[&str] = &["cor34", "remark-entropy", "flat", "skewed"];

fn preset_values(name: &str) -> Option<Vec<(&'static str, &'static str)>> {
    let bounds = |floor, p, phi| {
        vec![
            ("group_size", "16"),
            ("step_size", "5e-7"),
            ("clip_ratio", "0.2"),
            ("rollout_length", "4096"),
            ("vocab_size", "150000"),
            ("policy_floor", floor),
            ("activation_rate", "0.001"),
            ("mean_abs_advantage", "exact"),
            ("magnitude", "sample_std"),
            ("rho", "0.001"),
            ("delta", "10"),
            ("threshold_p", p),
            ("pi_hat", p),
            ("phi", phi),
            ("remainder_convention", "remark"),
        ]
    };
    let two_arm = |beta| {
        vec![
            ("group_size", "16"),
            ("step_size", "0.05"),
            ("vocab_size", "2"),
            ("policy_floor", "1e-3"),
            ("initial", "two_arm"),
            ("beta", beta),
            ("reward_mode", "random"),
            ("steps", "2000"),
        ]
    };
    match name {
        "cor34" => Some(bounds("1e-6", "2e-6", "uniform")),
        "remark-entropy" => Some(bounds("1e-7", "2e-7", "remark")),
        "flat" => Some(two_arm("0.5")),
        "skewed" => Some(two_arm("0.95")),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, LabError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("{origin}:{}: expected `key = value`, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_assignment(s: &str) -> Result<(String, String), LabError> {
    let (k, v) = s.split_once('=').ok_or_else(|| config_err(format!("--set expects KEY=VALUE, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl Default for Config {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Config {
    /// Layers defaults < preset < file < `overrides`, in that order.
    pub fn resolve(
        preset: Option<&str>,
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self, LabError> {
        let mut cfg = Config::default();
        if let Some(name) = preset {
            let vals = preset_values(name)
                .ok_or_else(|| config_err(format!("unknown preset `{name}` (available: {})", PRESETS.join(", "))))?;
            for (k, v) in vals {
                cfg.set(k, v)?;
            }
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_pairs(&text, &path.display().to_string())? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), LabError> {
        if !known(key) {
            return Err(config_err(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, LabError>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse::<T>().map_err(|e| config_err(format!("config key `{key}`: cannot parse `{raw}`: {e}")))
    }

    fn choice<'a>(&'a self, key: &str, allowed: &[&str]) -> Result<&'a str, LabError> {
        let raw = self.raw(key);
        if allowed.contains(&raw) {
            Ok(raw)
        } else {
            Err(config_err(format!("config key `{key}`: `{raw}` is not one of {}", allowed.join(", "))))
        }
    }

    pub fn seed(&self) -> Result<u64, LabError> {
        self.get("seed")
    }

    pub fn params(&self) -> Result<HyperParams<f64>, LabError> {
        HyperParams::new(
            self.get("group_size")?,
            self.get("step_size")?,
            self.get("clip_ratio")?,
            self.get("rollout_length")?,
            self.get("vocab_size")?,
            self.get("policy_floor")?,
        )
        .map_err(|e| config_err(e.to_string()))
    }

    pub fn initial(&self) -> Result<InitialPolicy, LabError> {
        Ok(match self.choice("initial", &["uniform", "two_arm", "explicit"])? {
            "uniform" => InitialPolicy::Uniform,
            "two_arm" => InitialPolicy::TwoArm(self.get("beta")?),
            _ => {
                let raw = self.raw("initial_probs");
                let probs = raw
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| config_err(format!("config key `initial_probs`: cannot parse `{raw}`: {e}")))?;
                InitialPolicy::Explicit(probs)
            }
        })
    }

    pub fn initial_policy(&self) -> Result<Policy<f64>, LabError> {
        let v: usize = self.get("vocab_size")?;
        self.initial()?.build(v).map_err(|e| config_err(format!("config key `initial`: {e}")))
    }

    pub fn update_modes(&self) -> Result<Vec<UpdateMode>, LabError> {
        Ok(match self.choice("update_mode", &["unclipped", "clipped", "paired"])? {
            "unclipped" => vec![UpdateMode::Unclipped],
            "clipped" => vec![UpdateMode::Clipped],
            _ => vec![UpdateMode::Unclipped, UpdateMode::Clipped],
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig, LabError> {
        let mut c = SimConfig::new(self.params()?, self.initial()?);
        let arm: usize = self.get("correct_arm")?;
        c.reward_mode = match self.choice("reward_mode", &["random", "true_arm", "random_labels"])? {
            "random" => RewardMode::Random,
            "true_arm" => RewardMode::TrueArm(arm),
            _ => RewardMode::RandomLabels { correct_arm: arm },
        };
        c.update_mode = self.update_modes()?[0];
        c.steps = self.get("steps")?;
        c.groups_per_step = self.get("groups_per_step")?;
        c.record_every = self.get("record_every")?;
        c.enforce_floor = self.get("enforce_floor")?;
        c.seed = self.seed()?;
        c.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(c)
    }

    pub fn bounds_inputs(&self) -> Result<BoundsInputs, LabError> {
        let params = self.params()?;
        let mean_abs_advantage = match self.raw("mean_abs_advantage") {
            "exact" => None,
            _ => Some(self.get("mean_abs_advantage")?),
        };
        let magnitude = match self.raw("magnitude") {
            "sample_std" => Magnitude::SampleStd,
            "sqrt_g_minus_one" => Magnitude::SqrtGMinusOne,
            _ => Magnitude::Explicit(self.get("magnitude").map_err(|_| {
                config_err(format!(
                    "config key `magnitude`: expected sample_std, sqrt_g_minus_one or a number, got `{}`",
                    self.raw("magnitude")
                ))
            })?),
        };
        let phi = match self.raw("phi") {
            "uniform" => None,
            "initial" => Some(skewness_phi(&self.initial_policy()?)),
            "remark" => Some(PHI_MIN_REMARK),
            _ => Some(self.get("phi")?),
        };
        let remainder_convention = match self.choice("remainder_convention", &["remark", "lemma"])? {
            "remark" => RemainderConvention::Remark,
            _ => RemainderConvention::Lemma,
        };
        Ok(BoundsInputs {
            params,
            activation_rate: self.get("activation_rate")?,
            mean_abs_advantage,
            magnitude,
            rho: self.get("rho")?,
            delta: self.get("delta")?,
            threshold_p: self.get("threshold_p")?,
            pi_hat: self.get("pi_hat")?,
            phi,
            remainder_convention,
        })
    }
}
