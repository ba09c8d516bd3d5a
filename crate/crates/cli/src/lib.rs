//! Command-line front end for `grpo-dynamics`.

pub mod config;
pub mod output;

use anyhow::Context;
use clap::{Parser, Subcommand};
use config::{parse_assignment, Config};
use grpo_dynamics::entropy::{entropy, exact_entropy_step_oracle, predicted_entropy_step_unclipped, skewness_phi};
use grpo_dynamics::misalign::{conditional_damage, fraction_monotonicity_scan, DamageStats, MisalignConfig};
use grpo_dynamics::presets::bounds_report;
use grpo_dynamics::sim::{paired_clip_experiment, run_training, summarize};
use grpo_dynamics::verify::{run_all, run_suite, Suite};
use grpo_dynamics::{Exact, Field};
use serde_json::{json, Value};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum LabError {
    /// Bad configuration or parameters; exit code 2.
    Config(String),
    /// A verification check failed; exit code 1.
    Check(String),
    Runtime(anyhow::Error),
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Config(m) => write!(f, "configuration error: {m}"),
            LabError::Check(m) => write!(f, "check failed: {m}"),
            LabError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl std::error::Error for LabError {}

impl From<anyhow::Error> for LabError {
    fn from(e: anyhow::Error) -> Self {
        LabError::Runtime(e)
    }
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Check(_) | LabError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: grpo_dynamics::Error) -> LabError {
    LabError::Runtime(e.into())
}

#[derive(Debug, Parser)]
#[command(name = "grpo-lab", version, about = "Entropy and clipping dynamics of group-relative policy updates")]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Override one config key, e.g. `--set group_size=8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clip-correction, signal-ratio and entropy bounds for the configured parameters.
    Bounds,
    /// Train a tabular policy and write its trajectory.
    Simulate,
    /// Predicted versus exact one-step entropy change for the initial policy.
    EntropyStep,
    /// Exact damage statistics for `n_c` correct and `n_i` incorrect rollouts.
    Misalign,
    /// Run the numerical self-checks.
    Verify {
        /// advantage, entropy, clip, misalign, kkt or all
        #[arg(default_value = "all")]
        suite: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
            Command::EntropyStep => "entropy-step",
            Command::Misalign => "misalign",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("grpo-lab: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), LabError> {
    let started = chrono::Utc::now();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(LabError::Config("--threads must be at least 1".into()));
        }
        // A second call in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut overrides = cli.set.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = Config::resolve(cli.preset.as_deref(), cli.config.as_deref(), &overrides)?;
    let seed = cfg.seed()?;

    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    let mut outputs = Vec::new();
    let result = match &cli.command {
        Command::Bounds => cmd_bounds(&cfg, &cli.out, &mut outputs),
        Command::Simulate => cmd_simulate(&cfg, &cli.out, &mut outputs),
        Command::EntropyStep => cmd_entropy_step(&cfg, &cli.out, &mut outputs),
        Command::Misalign => cmd_misalign(&cfg, &cli.out, &mut outputs),
        Command::Verify { suite } => cmd_verify(suite, &cli.out, &mut outputs),
    };
    if matches!(result, Err(LabError::Config(_))) {
        return result;
    }

    let manifest = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.values(),
        "seed": seed,
        "preset": cli.preset,
        "threads": cli.threads.unwrap_or_else(rayon::current_num_threads),
        "started": started.to_rfc3339(),
        "finished": chrono::Utc::now().to_rfc3339(),
        "status": if result.is_ok() { "ok" } else { "failed" },
        "outputs": outputs,
    });
    output::write_json(&cli.out.join("manifest.json"), &manifest)?;
    result
}

fn emit(out: &Path, name: &str, value: &Value, outputs: &mut Vec<String>) -> Result<(), LabError> {
    output::write_json(&out.join(name), value)?;
    outputs.push(name.to_string());
    Ok(())
}

fn cmd_bounds(cfg: &Config, out: &Path, outputs: &mut Vec<String>) -> Result<(), LabError> {
    let inputs = cfg.bounds_inputs()?;
    let rep = bounds_report(&inputs).map_err(|e| LabError::Config(e.to_string()))?;
    let value = output::to_json_with_sentinels(&rep, &[("/clip/ratio", rep.clip.ratio)])?;
    emit(out, "bounds.json", &value, outputs)?;
    println!("R_max              {:e}", rep.clip.r_max);
    println!("C_tot bound        {:e}", rep.clip.bound_ctot);
    println!("N_raw lower bound  {:e}", rep.clip.lower_nraw);
    println!("signal ratio       {}", output::fmt_float(rep.clip.ratio));
    println!("E|A|               {}", rep.mean_abs_advantage);
    println!("entropy bound      {:e}", rep.clipped_entropy.total);
    Ok(())
}

fn cmd_simulate(cfg: &Config, out: &Path, outputs: &mut Vec<String>) -> Result<(), LabError> {
    let sim = cfg.sim_config()?;
    let modes = cfg.update_modes()?;
    let runs = if modes.len() == 2 {
        let (u, c) = paired_clip_experiment(&sim).map_err(runtime)?;
        vec![("trajectory_unclipped.csv", "unclipped", u), ("trajectory_clipped.csv", "clipped", c)]
    } else {
        vec![("trajectory.csv", cfg.raw("update_mode"), run_training(&sim).map_err(runtime)?)]
    };
    let mut summary = serde_json::Map::new();
    for (file, label, traj) in &runs {
        output::write_trajectory_csv(&out.join(file), &traj.records)?;
        outputs.push(file.to_string());
        let s = summarize(traj).map_err(runtime)?;
        println!(
            "{label:<10} H0 {:.6}  H_final {:.6}  slope {:+.3e}",
            s.initial_entropy, s.final_entropy, s.entropy_slope
        );
        let mut v = serde_json::to_value(s).context("summary")?;
        v["floor_drift"] = json!(traj.floor_drift);
        v["final_policy"] = json!(traj.final_policy);
        summary.insert(label.to_string(), v);
    }
    emit(out, "summary.json", &Value::Object(summary), outputs)
}

fn cmd_entropy_step(cfg: &Config, out: &Path, outputs: &mut Vec<String>) -> Result<(), LabError> {
    let params = cfg.params()?;
    let pi = cfg.initial_policy()?;
    if pi.len() != params.vocab_size() {
        return Err(LabError::Config(format!(
            "initial policy has {} arms but vocab_size is {}",
            pi.len(),
            params.vocab_size()
        )));
    }
    let pred = predicted_entropy_step_unclipped(&pi, &params).map_err(|e| LabError::Config(e.to_string()))?;
    let mut exact = serde_json::Map::new();
    let mut within = Value::Null;
    for mode in cfg.update_modes()? {
        match exact_entropy_step_oracle(&pi, &params, mode) {
            Ok(dh) => {
                let label = format!("{mode:?}").to_lowercase();
                if label == "unclipped" {
                    within = json!(pred.with_measured(dh).within_budget);
                }
                exact.insert(label, json!(dh));
            }
            Err(grpo_dynamics::Error::BudgetExceeded { needed, limit, .. }) => {
                eprintln!("exact enumeration skipped: needs {needed:.3e} cells, limit {limit:.3e}");
            }
            Err(e) => return Err(runtime(e)),
        }
    }
    let value = json!({
        "entropy": entropy(&pi),
        "phi": skewness_phi(&pi),
        "predicted_leading": pred.delta_predicted_leading,
        "remainder_budget": pred.remainder_budget,
        "exact": exact,
        "within_budget": within,
    });
    println!("Φ                  {}", skewness_phi(&pi));
    println!("predicted ΔH       {:e}", pred.delta_predicted_leading);
    println!("remainder budget   {:e}", pred.remainder_budget);
    for (k, v) in &exact {
        println!("exact ΔH ({k}) {v}");
    }
    emit(out, "entropy_step.json", &value, outputs)
}

fn exact_stats(s: &DamageStats<Exact>) -> Value {
    let fields: [(&str, &Exact); 12] = [
        ("mean", &s.mean),
        ("variance", &s.variance),
        ("e_delta_f_gt_g", &s.e_delta_f_gt_g),
        ("e_delta_g_gt_f", &s.e_delta_g_gt_f),
        ("p_f_gt_g", &s.p_f_gt_g),
        ("p_g_gt_f", &s.p_g_gt_f),
        ("var_given_f_gt_g", &s.var_given_f_gt_g),
        ("var_given_g_gt_f", &s.var_given_g_gt_f),
        ("var_given_f_gt_g_decomposed", &s.var_given_f_gt_g_decomposed),
        ("var_given_g_gt_f_decomposed", &s.var_given_g_gt_f_decomposed),
        ("mean_given_f_gt_g", &s.mean_given_f_gt_g),
        ("mean_given_g_gt_f", &s.mean_given_g_gt_f),
    ];
    Value::Object(fields.iter().map(|(k, v)| (k.to_string(), json!(v.to_string()))).collect())
}

fn cmd_misalign(cfg: &Config, out: &Path, outputs: &mut Vec<String>) -> Result<(), LabError> {
    let n_c: usize = cfg.get("n_c")?;
    let n_i: usize = cfg.get("n_i")?;
    let mc = MisalignConfig::new(n_c, n_i).map_err(|e| LabError::Config(e.to_string()))?;
    let exact = conditional_damage::<Exact>(&mc).map_err(|e| LabError::Config(e.to_string()))?;
    let approx = conditional_damage::<f64>(&mc).map_err(runtime)?;
    let g = n_c + n_i;
    let scan = if g <= 60 {
        let s = fraction_monotonicity_scan::<Exact>(g).map_err(runtime)?;
        json!({
            "group_size": g,
            "strictly_decreasing": s.strictly_decreasing,
            "rows": s.rows.iter().map(|r| json!({
                "n_c": r.n_c,
                "fraction": r.fraction.approx_f64(),
                "fraction_exact": r.fraction.to_string(),
            })).collect::<Vec<_>>(),
        })
    } else {
        Value::Null
    };
    let ordering = (n_c > n_i).then(|| exact.ordering_holds());
    let value = json!({
        "n_c": n_c,
        "n_i": n_i,
        "stats": approx,
        "exact": exact_stats(&exact),
        "fraction_f_gt_g": exact.fraction_f_gt_g().approx_f64(),
        "ordering_holds": ordering,
        "fraction_scan": scan,
    });
    println!("E[Δ]               {} = {}", exact.mean, approx.mean);
    println!("Var(Δ)             {} = {}", exact.variance, approx.variance);
    println!("E[Δ·1(f>g)]        {}", exact.e_delta_f_gt_g);
    println!("E[Δ·1(g>f)]        {}", exact.e_delta_g_gt_f);
    println!("Var(Δ | f>g)       {}", exact.var_given_f_gt_g);
    println!("Var(Δ | g>f)       {}", exact.var_given_g_gt_f);
    emit(out, "misalign.json", &value, outputs)
}

fn cmd_verify(suite: &str, out: &Path, outputs: &mut Vec<String>) -> Result<(), LabError> {
    let checks = if suite == "all" {
        run_all()
    } else {
        let s = Suite::parse(suite).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
            LabError::Config(format!("unknown suite `{suite}` (available: all, {})", names.join(", ")))
        })?;
        run_suite(s)
    };
    for c in &checks {
        println!(
            "{} {:<9} {:<40} value={:<14.6e} tol={:<10.3e} {:.2}s",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.value,
            c.tolerance,
            c.seconds
        );
    }
    emit(out, "verify.json", &serde_json::to_value(&checks).context("checks")?, outputs)?;
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(LabError::Check(failed.join(", ")))
    }
}
