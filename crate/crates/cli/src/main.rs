//! `clusterkv` command-line tool: trace generation, simulation, sweeps and
//! cache benchmarks.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or inputs, 2 for I/O and
//! trace-format errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clusterkv::clustering::DistanceMetric;
use clusterkv::harness::{emit_report, emit_summary, PolicyConfig, PolicyKind, ReportFormat, RunReport, SweepAxis};
use clusterkv::selection::PageRepr;
use clusterkv::trace::{generate_synthetic, read_trace, write_trace, SynthSpec, TraceBundle};
use clusterkv::{run_simulation, sweep, Error};

#[derive(Parser, Debug)]
#[command(name = "clusterkv", version, about = "Semantic-cluster KV cache selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic trace from a JSON spec.
    GenTrace {
        /// JSON file with generator parameters; omitted fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace under one policy and write per-step metrics.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "clusterkv")]
        policy: PolicyKind,
        #[command(flatten)]
        opts: PolicyArgs,
        /// Report path; `.json` writes JSON, anything else CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        format: Option<ReportFormat>,
    },
    /// Re-run the simulation for each value of one parameter.
    Sweep {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "clusterkv")]
        policies: Vec<PolicyKind>,
        #[command(flatten)]
        opts: PolicyArgs,
        /// Output directory: one CSV per run plus `summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cache hit rate and transfer volume across retention settings.
    CacheBench {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        retention_values: Vec<usize>,
        #[command(flatten)]
        opts: PolicyArgs,
        /// Summary CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct PolicyArgs {
    #[arg(long, default_value_t = 1024)]
    budget: usize,
    #[arg(long, default_value_t = 80)]
    c0_divisor: usize,
    /// Fixed prefill cluster count, overriding --c0-divisor.
    #[arg(long)]
    c0: Option<usize>,
    #[arg(long, default_value_t = 4)]
    c_plus: usize,
    /// Decode batch size.
    #[arg(long, default_value_t = 320)]
    m: usize,
    #[arg(long, default_value_t = 16)]
    sink: usize,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long, default_value = "cosine")]
    distance: DistanceMetric,
    #[arg(long, default_value_t = 16)]
    page_size: usize,
    #[arg(long, default_value = "max")]
    page_repr: PageRepr,
    #[arg(long, default_value_t = 1)]
    retention: usize,
    #[arg(long, default_value = "on", value_parser = ["on", "off"])]
    recency_window: String,
    /// Layers that skip selection, e.g. `0,1`.
    #[arg(long, value_delimiter = ',')]
    full_layers: Vec<usize>,
    /// Register decode batches late instead of at the next step.
    #[arg(long)]
    async_clustering: bool,
    /// Steps of delay under --async-clustering.
    #[arg(long, default_value_t = 1)]
    async_lag: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PolicyArgs {
    fn config(&self, policy: PolicyKind) -> PolicyConfig {
        let mut cfg = PolicyConfig::new(policy, self.budget);
        cfg.cluster.c0_divisor = self.c0_divisor;
        cfg.cluster.initial_clusters = self.c0;
        cfg.cluster.c_plus = self.c_plus;
        cfg.cluster.decode_batch = self.m;
        cfg.cluster.sink_tokens = self.sink;
        cfg.cluster.max_iters = self.max_iters;
        cfg.cluster.metric = self.distance;
        cfg.cluster.seed = self.seed;
        cfg.page_size = self.page_size;
        cfg.page_repr = self.page_repr;
        cfg.retention = self.retention;
        cfg.recency_window = self.recency_window == "on";
        cfg.full_layers = self.full_layers.iter().copied().collect::<BTreeSet<_>>();
        cfg.async_lag = self.async_clustering.then_some(self.async_lag);
        cfg.seed = self.seed;
        cfg
    }
}

fn print_summary(report: &RunReport) {
    let s = &report.summary;
    let hit = s.hit_rate.map_or_else(|| "n/a".to_owned(), |h| format!("{h:.4}"));
    println!(
        "{} B={}: recall {:.4} l2_rel {:.4} cos_sim {:.4} hit_rate {hit} tokens_transferred {} ({:.0} ms)",
        report.policy, report.budget, s.mean_recall, s.mean_l2_rel, s.mean_cos_sim, s.tokens_transferred, s.wall_time_ms
    );
}

fn load(path: &Path) -> Result<TraceBundle, Error> {
    read_trace(path).inspect_err(|_| eprintln!("while reading {}", path.display()))
}

fn gen_trace(spec: Option<&Path>, out: &Path) -> Result<(), Error> {
    let spec: SynthSpec = match spec {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => SynthSpec::default(),
    };
    let bundle = generate_synthetic(&spec)?;
    write_trace(&bundle, out)?;
    println!(
        "wrote {} ({} layers x {} heads, L={}, T={}, d={})",
        out.display(),
        bundle.n_layers,
        bundle.n_heads,
        bundle.prompt_len(),
        bundle.decode_len(),
        bundle.head_dim()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenTrace { spec, out } => gen_trace(spec.as_deref(), &out),
        Command::Simulate {
            trace,
            policy,
            opts,
            out,
            format,
        } => {
            let cfg = opts.config(policy);
            cfg.validate()?;
            let bundle = load(&trace)?;
            let report = run_simulation(&bundle, &cfg)?;
            emit_report(&report, format.unwrap_or_else(|| ReportFormat::from_path(&out)), &out)?;
            print_summary(&report);
            Ok(())
        }
        Command::Sweep {
            trace,
            axis,
            values,
            policies,
            opts,
            out,
        } => {
            let bundle = load(&trace)?;
            let mut all = Vec::new();
            for &policy in &policies {
                let base = opts.config(policy);
                for report in sweep(&bundle, &base, axis, &values)? {
                    print_summary(&report);
                    all.push(report);
                }
            }
            fs::create_dir_all(&out)?;
            for r in &all {
                let value = r.params.get("value").map_or("", String::as_str);
                let name = format!("{}_{}_{}.csv", r.policy, axis.name(), value);
                emit_report(r, ReportFormat::Csv, out.join(name))?;
            }
            emit_summary(&all, out.join("summary.csv"))
        }
        Command::CacheBench {
            trace,
            retention_values,
            opts,
            out,
        } => {
            let bundle = load(&trace)?;
            let values: Vec<String> = retention_values.iter().map(usize::to_string).collect();
            let reports = sweep(&bundle, &opts.config(PolicyKind::ClusterKv), SweepAxis::Retention, &values)?;
            reports.iter().for_each(print_summary);
            emit_summary(&reports, &out)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Format(_) => 2,
        Error::InvalidArgument(_) | Error::Validation(_) | Error::Degenerate(_) | Error::Json(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
