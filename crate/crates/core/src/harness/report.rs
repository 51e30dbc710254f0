use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{histogram, mean, HeadRun, PolicyConfig, PolicyKind};
use crate::error::{invalid, Result};

/// Metrics of one decode step of one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub layer: usize,
    pub head: usize,
    pub step: usize,
    pub recall: f64,
    pub l2_rel: f64,
    pub cos_sim: f64,
    pub clusters_hit: u64,
    pub clusters_requested: u64,
    pub tokens_transferred: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub mean_recall: f64,
    pub mean_l2_rel: f64,
    pub mean_cos_sim: f64,
    /// Pooled over heads; absent for policies without a cache.
    pub hit_rate: Option<f64>,
    pub tokens_transferred: u64,
    /// K-means iteration count → number of runs.
    pub kmeans_iterations: BTreeMap<usize, usize>,
    pub wall_time_ms: f64,
}

/// Wall-clock time is excluded so that identical runs compare equal.
impl PartialEq for Summary {
    fn eq(&self, other: &Self) -> bool {
        let same_f64 = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        same_f64(self.mean_recall, other.mean_recall)
            && same_f64(self.mean_l2_rel, other.mean_l2_rel)
            && same_f64(self.mean_cos_sim, other.mean_cos_sim)
            && self.hit_rate == other.hit_rate
            && self.tokens_transferred == other.tokens_transferred
            && self.kmeans_iterations == other.kmeans_iterations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: PolicyKind,
    pub budget: usize,
    /// Free-form labels, e.g. the sweep axis and value.
    pub params: BTreeMap<String, String>,
    /// Sorted by (layer, head, step).
    pub rows: Vec<StepRow>,
    pub summary: Summary,
}

pub const CSV_HEADER: &str = "policy,budget,layer,head,step,recall,l2_rel,cos_sim,clusters_hit,clusters_requested,tokens_transferred";
pub const SUMMARY_HEADER: &str = "policy,budget,axis,value,mean_recall,mean_l2_rel,mean_cos_sim,hit_rate,tokens_transferred";

impl RunReport {
    pub fn from_heads(cfg: &PolicyConfig, heads: Vec<HeadRun>, elapsed: Duration) -> Self {
        let requested: u64 = heads.iter().map(|h| h.clusters_requested).sum();
        let hit: u64 = heads.iter().map(|h| h.clusters_hit).sum();
        let iterations = histogram(heads.iter().flat_map(|h| h.kmeans_iterations.iter().copied()));
        let mut rows: Vec<StepRow> = heads.into_iter().flat_map(|h| h.rows).collect();
        rows.sort_by_key(|r| (r.layer, r.head, r.step));
        let summary = Summary {
            mean_recall: mean(&rows, |r| r.recall),
            mean_l2_rel: mean(&rows, |r| r.l2_rel),
            mean_cos_sim: mean(&rows, |r| r.cos_sim),
            hit_rate: (requested > 0).then(|| hit as f64 / requested as f64),
            tokens_transferred: rows.iter().map(|r| r.tokens_transferred).sum(),
            kmeans_iterations: iterations,
            wall_time_ms: elapsed.as_secs_f64() * 1e3,
        };
        Self {
            policy: cfg.policy,
            budget: cfg.budget,
            params: BTreeMap::new(),
            rows,
            summary,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.policy,
                self.budget,
                r.layer,
                r.head,
                r.step,
                format_sig6(r.recall),
                format_sig6(r.l2_rel),
                format_sig6(r.cos_sim),
                r.clusters_hit,
                r.clusters_requested,
                r.tokens_transferred
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn summary_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.budget,
            self.params.get("axis").map_or("", String::as_str),
            self.params.get("value").map_or("", String::as_str),
            format_sig6(self.summary.mean_recall),
            format_sig6(self.summary.mean_l2_rel),
            format_sig6(self.summary.mean_cos_sim),
            self.summary.hit_rate.map(format_sig6).unwrap_or_default(),
            self.summary.tokens_transferred
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// `.json` selects JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(invalid(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn emit_report(report: &RunReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json()?,
    };
    fs::write(path, body)?;
    Ok(())
}

/// One CSV row per report: policy, budget, sweep axis/value and aggregates.
pub fn summary_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.summary_line());
        out.push('\n');
    }
    out
}

pub fn emit_summary(reports: &[RunReport], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, summary_csv(reports))?;
    Ok(())
}

/// Formats like C's `%.6g`: six significant digits, trailing zeros removed,
/// scientific notation outside `[1e-4, 1e6)`.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
