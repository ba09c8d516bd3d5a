//! Trajectory CSV and JSON report files.

use anyhow::{bail, Context, Result};
use grpo_dynamics::sim::TrajectoryRecord;
use serde::Serialize;
use std::path::Path;

pub const CSV_HEADER: [&str; 7] =
    ["step", "entropy_nats", "phi", "max_arm", "true_arm_prob", "clip_rate", "mean_damage"];

/// 17 significant digits, locale-independent.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn write_trajectory_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            fmt_float(r.entropy),
            fmt_float(r.phi),
            r.max_arm.to_string(),
            opt(r.true_arm_prob),
            opt(r.clip_rate),
            opt(r.mean_damage),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        bail!("unexpected CSV header {header:?}");
    }
    let parse_opt = |s: &str| -> Result<Option<f64>> { Ok(if s.is_empty() { None } else { Some(s.parse()?) }) };
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        out.push(TrajectoryRecord {
            step: row[0].parse()?,
            entropy: row[1].parse()?,
            phi: row[2].parse()?,
            max_arm: row[3].parse()?,
            true_arm_prob: parse_opt(&row[4])?,
            clip_rate: parse_opt(&row[5])?,
            mean_damage: parse_opt(&row[6])?,
            policy: None,
        });
    }
    Ok(out)
}

/// Serializes `value`, then writes the `"inf"` sentinel at each listed
/// pointer whose source value was infinite (JSON has no infinity).
pub fn to_json_with_sentinels<T: Serialize>(value: &T, infinite: &[(&str, f64)]) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(value)?;
    for &(pointer, x) in infinite {
        if x.is_infinite() {
            if let Some(slot) = v.pointer_mut(pointer) {
                *slot = serde_json::Value::String(if x > 0.0 { "inf" } else { "-inf" }.into());
            }
        }
    }
    Ok(v)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
