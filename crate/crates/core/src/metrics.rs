//! Evaluation metrics over repeated pipeline runs: unbiased Pass@k,
//! functional coverage, and per tier × platform aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hil::NO_CAP;
use crate::llm::{KindTotals, LedgerPhase};
use crate::model::{classify_tier, DeviceTier};

pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(String),
}

/// Unbiased pass@k: `1 − C(n−c, k) / C(n, k)`, in product form.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if c > n || k < 1 || k > n {
        return Err(MetricsError::InvalidArgument(format!("need 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")));
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

pub fn functional_coverage(correct: u32, total: u32) -> Result<f64, MetricsError> {
    if total == 0 || correct > total {
        return Err(MetricsError::InvalidArgument(format!("need 0 <= correct <= total, total >= 1; got {correct}/{total}")));
    }
    Ok(correct as f64 / total as f64)
}

/// One pipeline run of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub platform_id: String,
    pub run_index: u32,
    /// Layout-valid and every basic integration test passed.
    pub usable: bool,
    pub functions_total: u32,
    /// Reported only for usable runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions_correct: Option<u32>,
    pub no_feedback_total: u32,
    #[serde(default)]
    pub ledger: BTreeMap<LedgerPhase, KindTotals>,
    pub wall_time_ms: u64,
    #[serde(default = "default_version")]
    pub metrics_version: u32,
}

fn default_version() -> u32 {
    METRICS_VERSION
}

impl RunRecord {
    fn check(&self) -> Result<DeviceTier, String> {
        let tier = classify_tier(self.functions_total as i64).map_err(|e| e.to_string())?;
        match (self.usable, self.functions_correct) {
            (false, Some(_)) => return Err("coverage reported for an unusable run".into()),
            (true, None) => return Err("usable run without functions_correct".into()),
            (true, Some(c)) if c > self.functions_total => return Err(format!("{c} correct of {} functions", self.functions_total)),
            _ => {}
        }
        if self.no_feedback_total > NO_CAP * self.functions_total {
            return Err(format!("{} \"no\" answers exceed the cap for {} functions", self.no_feedback_total, self.functions_total));
        }
        if self.metrics_version != METRICS_VERSION {
            return Err(format!("metrics version {} (expected {METRICS_VERSION})", self.metrics_version));
        }
        Ok(tier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub tier: DeviceTier,
    pub platform_id: String,
    pub tasks: usize,
    pub runs: usize,
    pub pass_at_1: f64,
    /// Mean over tasks with at least one usable run.
    pub coverage: Option<f64>,
    pub no_feedback_mean: f64,
    pub no_feedback_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics_version: u32,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Groups by tier × platform. Pass@1 and coverage are computed per task,
/// then averaged across tasks without weighting; "no" counts are pooled.
pub fn aggregate(records: &[RunRecord]) -> Report {
    let mut notes = Vec::new();
    let mut groups: BTreeMap<(DeviceTier, String), BTreeMap<&str, Vec<&RunRecord>>> = BTreeMap::new();
    let mut platforms = BTreeSet::new();
    for r in records {
        platforms.insert(r.platform_id.clone());
        match r.check() {
            Ok(tier) => groups
                .entry((tier, r.platform_id.clone()))
                .or_default()
                .entry(r.task.as_str())
                .or_default()
                .push(r),
            Err(why) => notes.push(format!("rejected {} run {}: {why}", r.task, r.run_index)),
        }
    }
    let mut rows = Vec::new();
    for tier in [DeviceTier::Tier1, DeviceTier::Tier2, DeviceTier::Tier3] {
        for platform in &platforms {
            let Some(tasks) = groups.get(&(tier, platform.clone())) else {
                notes.push(format!("{tier} × {platform}: no runs"));
                continue;
            };
            let mut pass = Vec::new();
            let mut cov = Vec::new();
            let mut nos = Vec::new();
            for runs in tasks.values() {
                let usable = runs.iter().filter(|r| r.usable).count() as u64;
                pass.push(pass_at_k(runs.len() as u64, usable, 1).expect("non-empty task"));
                let covs: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.functions_correct.map(|c| c as f64 / r.functions_total as f64))
                    .collect();
                if !covs.is_empty() {
                    cov.push(mean(&covs));
                }
                nos.extend(runs.iter().map(|r| r.no_feedback_total as f64));
            }
            rows.push(ReportRow {
                tier,
                platform_id: platform.clone(),
                tasks: tasks.len(),
                runs: nos.len(),
                pass_at_1: mean(&pass),
                coverage: (!cov.is_empty()).then(|| mean(&cov)),
                no_feedback_mean: mean(&nos),
                no_feedback_std: std_dev(&nos),
            });
        }
    }
    Report { metrics_version: METRICS_VERSION, rows, notes }
}

impl Report {
    /// Plain-text table: one row per tier × platform.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:<12} {:>5} {:>5} {:>7} {:>9} {:>13}", "tier", "platform", "tasks", "runs", "pass@1", "coverage", "no mean/std");
        for r in &self.rows {
            let cov = r.coverage.map(|c| format!("{:.2}%", c * 100.0)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<8} {:<12} {:>5} {:>5} {:>6.2}% {:>9} {:>13}",
                r.tier.to_string(),
                r.platform_id,
                r.tasks,
                r.runs,
                r.pass_at_1 * 100.0,
                cov,
                format!("{:.2}/{:.2}", r.no_feedback_mean, r.no_feedback_std)
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), MetricsError> {
    let io = |e: std::io::Error| MetricsError::Io(format!("{}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| MetricsError::Io(e.to_string()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, MetricsError> {
    let io = |e: std::io::Error| MetricsError::Io(format!("{}: {e}", path.display()));
    let f = std::io::BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MetricsError::Io(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
