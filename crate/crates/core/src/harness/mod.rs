//! Trace-driven decode loop.
//!
//! For each head the simulator clusters the prompt once, then walks the
//! decode steps: the policy picks a budgeted token set, the cache is
//! consulted, approximate attention is compared against exact attention and
//! the exact top-B oracle, and the step's key/value is appended. Every `m`
//! generated tokens the batch is clustered and joins the selectable pool;
//! until then those tokens sit in the recency window.
//!
//! Heads are independent and run in parallel; rows are sorted before the
//! report is assembled, so output never depends on scheduling.

mod policy;
mod report;
mod sweep;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::policy::PolicyKind;
use self::policy::{HeadPolicy, StepView};
pub use self::report::{
    emit_report, emit_summary, format_sig6, summary_csv, ReportFormat, RunReport, StepRow, Summary, CSV_HEADER, SUMMARY_HEADER,
};
pub use self::sweep::{sweep, SweepAxis};

use crate::attention::{approx_attention, full_attention, output_error, recall_rate, AttentionOutput, OutputError};
use crate::clustering::ClusterConfig;
use crate::error::{invalid, validation, Result};
use crate::selection::{exact_topb, PageRepr};
use crate::trace::{HeadTrace, TraceBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    pub budget: usize,
    pub cluster: ClusterConfig,
    pub page_size: usize,
    pub page_repr: PageRepr,
    /// Cache retention `R` in decode steps.
    pub retention: usize,
    /// Attend to generated tokens that are not yet clustered.
    pub recency_window: bool,
    /// Layers that bypass selection and attend to the full cache.
    pub full_layers: BTreeSet<usize>,
    /// When set, a completed decode batch registers this many steps late.
    pub async_lag: Option<usize>,
    /// Seed for the random policy.
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::ClusterKv,
            budget: 1024,
            cluster: ClusterConfig::default(),
            page_size: 16,
            page_repr: PageRepr::Max,
            retention: 1,
            recency_window: true,
            full_layers: BTreeSet::new(),
            async_lag: None,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn new(policy: PolicyKind, budget: usize) -> Self {
        Self {
            policy,
            budget,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(invalid("budget must be at least 1"));
        }
        if self.page_size == 0 {
            return Err(invalid("page_size must be at least 1"));
        }
        if self.retention == 0 {
            return Err(invalid("retention must be at least 1"));
        }
        self.cluster.validate()
    }
}

/// Everything recorded for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRun {
    pub layer: usize,
    pub head: usize,
    pub rows: Vec<StepRow>,
    /// Cache units (cluster or page ids) requested at each step, ascending.
    pub selection_log: Vec<Vec<u32>>,
    /// Budgeted token positions chosen at each step, ascending.
    pub token_log: Vec<Vec<usize>>,
    /// Iterations of every K-means run, prefill first.
    pub kmeans_iterations: Vec<usize>,
    pub clusters_requested: u64,
    pub clusters_hit: u64,
}

/// Simulates every head and aggregates the report.
pub fn run_simulation(bundle: &TraceBundle, cfg: &PolicyConfig) -> Result<RunReport> {
    let start = Instant::now();
    let heads = simulate_heads(bundle, cfg)?;
    Ok(RunReport::from_heads(cfg, heads, start.elapsed()))
}

/// Simulates every head and returns the per-head detail, ordered by
/// (layer, head).
pub fn simulate_heads(bundle: &TraceBundle, cfg: &PolicyConfig) -> Result<Vec<HeadRun>> {
    cfg.validate()?;
    bundle.validate()?;
    if bundle.traces.is_empty() {
        return Err(validation("trace bundle has no heads"));
    }
    let mut runs = (0..bundle.n_layers * bundle.n_heads)
        .into_par_iter()
        .map(|i| {
            let (layer, head) = (i / bundle.n_heads, i % bundle.n_heads);
            simulate_head(bundle.head(layer, head), layer, head, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (r.layer, r.head));
    Ok(runs)
}

struct PendingBatch {
    start: usize,
    end: usize,
    ready_step: usize,
}

pub fn simulate_head(trace: &HeadTrace, layer: usize, head: usize, cfg: &PolicyConfig) -> Result<HeadRun> {
    cfg.validate()?;
    trace.validate()?;
    let keys = trace.all_keys();
    let values = trace.all_values();
    let prompt_len = trace.prompt_len();
    let decode_len = trace.decode_len();
    let sink = cfg.cluster.sink_tokens.min(prompt_len);
    let m = cfg.cluster.decode_batch;

    let kind = if cfg.full_layers.contains(&layer) {
        PolicyKind::Full
    } else {
        cfg.policy
    };
    let mut policy = HeadPolicy::new(kind, cfg, trace, layer, head)?;

    let mut run = HeadRun {
        layer,
        head,
        rows: Vec::with_capacity(decode_len),
        selection_log: Vec::with_capacity(decode_len),
        token_log: Vec::with_capacity(decode_len),
        kmeans_iterations: policy.kmeans_iterations(),
        clusters_requested: 0,
        clusters_hit: 0,
    };

    // Positions below `registered_end` (and at or past `sink`) form the pool.
    let mut registered_end = prompt_len;
    let mut batch_start = prompt_len;
    let mut pending: VecDeque<PendingBatch> = VecDeque::new();

    for step in 0..decode_len {
        let visible = prompt_len + step;
        while pending.front().is_some_and(|b| b.ready_step <= step) {
            let b = pending.pop_front().unwrap();
            policy.register_batch(keys.view().slice_rows(b.start..b.end), b.start..b.end, &mut run.kmeans_iterations)?;
            registered_end = b.end;
        }

        let q = trace.decode_queries.row(step);
        let pool = sink..registered_end;
        let recency: Vec<usize> = if cfg.recency_window {
            (registered_end..visible).collect()
        } else {
            Vec::new()
        };

        let keys_now = keys.view().slice_rows(0..visible);
        let values_now = values.view().slice_rows(0..visible);
        let truth: Vec<usize> = exact_topb(q, keys_now.slice_rows(pool.clone()), cfg.budget.min(pool.len()))
            .into_iter()
            .map(|i| i + pool.start)
            .collect();

        let view = StepView {
            q,
            keys: keys_now,
            values: values_now,
            pool: pool.clone(),
            sink,
            recency: &recency,
            truth: &truth,
        };
        let choice = policy.select(&view)?;

        let mut attended: Vec<usize> = choice
            .tokens
            .iter()
            .copied()
            .chain(0..sink)
            .chain(recency.iter().copied())
            .collect();
        attended.sort_unstable();
        attended.dedup();

        let exact = full_attention(q, keys_now, values_now)?;
        let err = if attended.is_empty() {
            output_error(
                &AttentionOutput {
                    out: vec![0.0; exact.out.len()],
                    weights: Vec::new(),
                },
                &exact,
            )
        } else {
            output_error(&approx_attention(q, keys_now, values_now, &attended)?, &exact)
        };
        let OutputError { l2_rel, cos_sim, .. } = err;
        let recall = if truth.is_empty() {
            1.0
        } else {
            recall_rate(&choice.tokens, &truth)
        };

        run.clusters_requested += choice.cache.requested;
        run.clusters_hit += choice.cache.hits;
        run.rows.push(StepRow {
            layer,
            head,
            step,
            recall,
            l2_rel,
            cos_sim,
            clusters_hit: choice.cache.hits,
            clusters_requested: choice.cache.requested,
            tokens_transferred: choice.cache.tokens_transferred,
        });
        run.selection_log.push(choice.cache.units);
        run.token_log.push(choice.tokens);

        // The step's own key/value joins the cache after attention.
        let appended = visible + 1;
        if appended - batch_start == m {
            pending.push_back(PendingBatch {
                start: batch_start,
                end: appended,
                ready_step: step + 1 + cfg.async_lag.unwrap_or(0),
            });
            batch_start = appended;
        }
    }

    // Label everything generated so the final model covers the whole run.
    let end = prompt_len + decode_len;
    if batch_start < end {
        pending.push_back(PendingBatch {
            start: batch_start,
            end,
            ready_step: 0,
        });
    }
    for b in pending {
        policy.register_batch(keys.view().slice_rows(b.start..b.end), b.start..b.end, &mut run.kmeans_iterations)?;
    }
    Ok(run)
}

/// Aggregate mean of one row field; zero for an empty run.
pub(crate) fn mean(rows: &[StepRow], f: impl Fn(&StepRow) -> f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(f).sum::<f64>() / rows.len() as f64
}

pub(crate) fn histogram(values: impl IntoIterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for v in values {
        *h.entry(v).or_insert(0) += 1;
    }
    h
}
