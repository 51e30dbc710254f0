//! Recallable KV-cache compression at the granularity of semantic clusters.
//!
//! Key vectors are clustered by cosine similarity; at every decode step the
//! query is scored against cluster centroids and whole clusters are gathered
//! until the token budget is met. Tokens left out at one step stay eligible
//! at later steps. A trace-driven simulator measures how well this recalls
//! the true top-B tokens, how close the approximated attention output stays
//! to exact attention, and how effective a cluster-granularity cache is,
//! against page-based, greedy-eviction, random and oracle baselines.

pub mod attention;
pub mod cache;
pub mod clustering;
pub mod error;
pub mod harness;
pub mod selection;
pub mod tensor;
pub mod trace;

pub use attention::{approx_attention, full_attention, output_error, recall_rate, AttentionOutput, OutputError};
pub use cache::{CacheCounters, CacheOutcome, ClusterCache};
pub use clustering::{
    cluster_decode_batch, cluster_prefill, cosine_distance, kmeans, kmeans_cosine, ClusterConfig, ClusterModel, DistanceMetric, KmeansFit,
};
pub use error::{Error, FormatError, Result};
pub use harness::{run_simulation, simulate_heads, sweep, PolicyConfig, PolicyKind, ReportFormat, RunReport, StepRow, SweepAxis};
pub use selection::{
    build_index, exact_topb, page_select, score_clusters, select_tokens, ClusterIndex, GreedyEvictor, PageRepr, SelectionResult,
};
pub use tensor::{MatRef, Matrix};
pub use trace::{generate_synthetic, read_trace, write_trace, HeadTrace, SynthSpec, TraceBundle};
