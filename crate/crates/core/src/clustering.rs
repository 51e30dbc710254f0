//! Semantic clustering of key vectors.
//!
//! Keys are grouped with K-means under cosine distance. The prompt is
//! clustered once after prefill (skipping the leading attention-sink tokens),
//! and every `m` generated tokens are clustered on their own into `c_plus`
//! fresh clusters that are appended to the model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{dot, dot_f32, norm, MatRef, Matrix};

/// Norm below which a key is treated as degenerate.
pub const ZERO_NORM: f64 = 1e-12;

/// `1 - cos(a, b)`, in `[0, 2]`. A zero-norm operand is treated as orthogonal
/// and yields `1.0`.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < ZERO_NORM || nb < ZERO_NORM {
        return 1.0;
    }
    (1.0 - dot(a, b) / (na * nb)).clamp(0.0, 2.0)
}

/// Assignment metric used by K-means. Selection always scores centroids by
/// inner product regardless of this choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    #[default]
    Cosine,
    L2,
    InnerProduct,
}

impl DistanceMetric {
    /// Dissimilarity that the assignment step minimizes; also the per-token
    /// term of the K-means objective.
    pub fn distance(self, key: &[f32], centroid: &[f32]) -> f64 {
        match self {
            Self::Cosine => cosine_distance(key, centroid),
            Self::L2 => key.iter().zip(centroid).map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2)).sum(),
            Self::InnerProduct => -dot(key, centroid),
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "l2" => Ok(Self::L2),
            "inner-product" | "ip" => Ok(Self::InnerProduct),
            other => Err(invalid(format!("unknown distance metric {other:?}"))),
        }
    }
}

impl std::fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::L2 => "l2",
            Self::InnerProduct => "inner-product",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Prefill cluster count is `(L - sink_tokens) / c0_divisor`, rounded.
    pub c0_divisor: usize,
    /// Clusters minted per decode batch.
    pub c_plus: usize,
    /// Decode batch size `m`.
    pub decode_batch: usize,
    pub sink_tokens: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub metric: DistanceMetric,
    /// Fixed prefill cluster count, overriding `c0_divisor`.
    pub initial_clusters: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            c0_divisor: 80,
            c_plus: 4,
            decode_batch: 320,
            sink_tokens: 16,
            max_iters: 50,
            seed: 0,
            metric: DistanceMetric::Cosine,
            initial_clusters: None,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c0_divisor == 0 || self.c_plus == 0 || self.decode_batch == 0 {
            return Err(invalid("c0_divisor, c_plus and decode_batch must be at least 1"));
        }
        if self.initial_clusters == Some(0) {
            return Err(invalid("initial_clusters must be at least 1"));
        }
        Ok(())
    }

    /// Number of prefill clusters for `n` clusterable (non-sink) tokens.
    pub fn prefill_clusters(&self, n: usize) -> usize {
        let c = self
            .initial_clusters
            .unwrap_or_else(|| (n as f64 / self.c0_divisor as f64).round() as usize);
        c.clamp(1, n.max(1))
    }
}

/// Raw output of one K-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    /// Raw (unnormalized) member means, one row per non-empty cluster.
    pub centroids: Matrix,
    pub labels: Vec<u32>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after the initial assignment and after every iteration:
    /// summed distance of each key to its assigned centroid. Non-increasing
    /// for cosine and L2.
    pub objective: Vec<f64>,
}

/// K-means with `k` initial centroids sampled from distinct rows of `keys`.
pub fn kmeans(keys: MatRef<'_>, k: usize, metric: DistanceMetric, seed: u64, max_iters: usize) -> Result<KmeansFit> {
    let n = keys.rows();
    if k == 0 || k > n {
        return Err(invalid(format!("cannot form {k} clusters from {n} keys")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, k);
    let mut init = Matrix::zeros(0, keys.cols());
    for i in picks.iter() {
        init.push_row(keys.row(i));
    }
    kmeans_from_init(keys, init, metric, max_iters)
}

/// K-means from explicit initial centroids; cluster ids follow `init` row order.
pub fn kmeans_from_init(keys: MatRef<'_>, init: Matrix, metric: DistanceMetric, max_iters: usize) -> Result<KmeansFit> {
    let n = keys.rows();
    let k = init.rows();
    if k == 0 || k > n || init.cols() != keys.cols() {
        return Err(invalid(format!("cannot form {k} clusters from {n} keys")));
    }
    if keys.iter_rows().all(|r| norm(r) < ZERO_NORM) {
        return Err(Error::Degenerate("every key has zero norm".into()));
    }
    // Under cosine the iterations run on unit-normalized keys, so each update
    // is the mean direction of the members; the returned centroids are still
    // raw means of the original keys.
    let normalized = (metric == DistanceMetric::Cosine).then(|| normalize_rows(keys));
    let points = normalized.as_ref().map_or(keys, Matrix::view);

    let mut centroids = init;
    let mut labels = assign(points, &centroids, metric);
    let mut objective = vec![objective_of(points, &centroids, &labels, metric)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let counts = update_means(points, &labels, &mut centroids);
        repair_empty(points, &mut labels, &mut centroids, counts, metric);
        let next = assign(points, &centroids, metric);
        let obj = objective_of(points, &centroids, &next, metric);
        if metric != DistanceMetric::InnerProduct {
            let prev = *objective.last().unwrap();
            debug_assert!(
                obj <= prev + 1e-6 * n as f64,
                "k-means objective rose from {prev} to {obj} at iteration {iterations}"
            );
        }
        objective.push(obj);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }

    let (centroids, labels) = finalize(keys, &labels, centroids.rows());
    Ok(KmeansFit {
        centroids,
        labels,
        converged,
        iterations,
        objective,
    })
}

fn normalize_rows(keys: MatRef<'_>) -> Matrix {
    let mut out = keys.to_owned();
    for i in 0..out.rows() {
        let r = out.row_mut(i);
        let n = norm(r);
        if n >= ZERO_NORM {
            r.iter_mut().for_each(|x| *x = (f64::from(*x) / n) as f32);
        } else {
            r.fill(0.0);
        }
    }
    out
}

/// Assigns every point to its best centroid; ties go to the lowest id.
/// For cosine, `points` must already be normalized.
fn assign(points: MatRef<'_>, centroids: &Matrix, metric: DistanceMetric) -> Vec<u32> {
    let prepared: Matrix;
    let cents = match metric {
        DistanceMetric::Cosine => {
            prepared = normalize_rows(centroids.view());
            &prepared
        }
        _ => centroids,
    };
    let sq_norms: Vec<f32> = match metric {
        DistanceMetric::L2 => cents.view().iter_rows().map(|c| dot_f32(c, c)).collect(),
        _ => Vec::new(),
    };
    points
        .iter_rows()
        .map(|p| {
            let mut best = 0u32;
            let mut best_score = f32::NEG_INFINITY;
            for (c, row) in cents.view().iter_rows().enumerate() {
                let s = match metric {
                    DistanceMetric::L2 => 2.0 * dot_f32(p, row) - sq_norms[c],
                    _ => dot_f32(p, row),
                };
                if s > best_score {
                    best_score = s;
                    best = c as u32;
                }
            }
            best
        })
        .collect()
}

fn objective_of(keys: MatRef<'_>, centroids: &Matrix, labels: &[u32], metric: DistanceMetric) -> f64 {
    keys.iter_rows()
        .zip(labels)
        .map(|(k, &l)| metric.distance(k, centroids.row(l as usize)))
        .sum()
}

/// Replaces each centroid with the mean of its members; returns member counts.
/// Empty clusters keep their previous centroid.
fn update_means(keys: MatRef<'_>, labels: &[u32], centroids: &mut Matrix) -> Vec<usize> {
    let d = keys.cols();
    let k = centroids.rows();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (row, &l) in keys.iter_rows().zip(labels) {
        let l = l as usize;
        counts[l] += 1;
        for (s, &x) in sums[l * d..(l + 1) * d].iter_mut().zip(row) {
            *s += f64::from(x);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *dst = (s * inv) as f32;
            }
        }
    }
    counts
}

/// Reseeds every empty cluster with the member of the currently largest
/// cluster that lies farthest from that cluster's centroid.
fn repair_empty(keys: MatRef<'_>, labels: &mut [u32], centroids: &mut Matrix, mut counts: Vec<usize>, metric: DistanceMetric) {
    for empty in 0..counts.len() {
        if counts[empty] > 0 {
            continue;
        }
        let largest = (0..counts.len()).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
        if counts[largest] < 2 {
            return;
        }
        let centroid = centroids.row(largest).to_vec();
        let mut far = None;
        let mut far_dist = f64::NEG_INFINITY;
        for (i, &l) in labels.iter().enumerate() {
            if l as usize == largest {
                let dist = metric.distance(keys.row(i), &centroid);
                if dist > far_dist {
                    far_dist = dist;
                    far = Some(i);
                }
            }
        }
        let Some(far) = far else { return };
        centroids.row_mut(empty).copy_from_slice(keys.row(far));
        labels[far] = empty as u32;
        counts[largest] -= 1;
        counts[empty] = 1;
    }
}

/// Recomputes centroids as member means and drops empty clusters, renumbering
/// the survivors in their original order.
fn finalize(keys: MatRef<'_>, labels: &[u32], k: usize) -> (Matrix, Vec<u32>) {
    let mut centroids = Matrix::zeros(k, keys.cols());
    let counts = update_means(keys, labels, &mut centroids);
    let mut remap = vec![u32::MAX; k];
    let mut compact = Matrix::zeros(0, keys.cols());
    for c in 0..k {
        if counts[c] > 0 {
            remap[c] = compact.rows() as u32;
            compact.push_row(centroids.row(c));
        }
    }
    let labels = labels.iter().map(|&l| remap[l as usize]).collect();
    (compact, labels)
}

/// Cluster state of one attention head.
///
/// Positions `0..sink_count` are attention sinks and carry no label. Labels
/// cover the contiguous range `sink_count..covered_end()`: the prompt after
/// prefill, then each registered decode batch in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Matrix,
    pub labels: Vec<u32>,
    pub sink_count: usize,
    /// Whether every K-means run so far converged before `max_iters`.
    pub converged: bool,
    /// Iterations of the most recent K-means run.
    pub iterations_used: usize,
    /// Decode batches registered after prefill.
    pub decode_batches: usize,
}

impl ClusterModel {
    pub fn empty(head_dim: usize, sink_count: usize) -> Self {
        Self {
            centroids: Matrix::zeros(0, head_dim),
            labels: Vec::new(),
            sink_count,
            converged: true,
            iterations_used: 0,
            decode_batches: 0,
        }
    }

    /// Model in which every labeled token is its own cluster, with the key as
    /// centroid. Token `sink_count + i` gets cluster id `i`.
    pub fn singletons(keys: MatRef<'_>, sink_count: usize) -> Self {
        let rows = keys.rows().saturating_sub(sink_count);
        Self {
            centroids: keys.slice_rows(sink_count.min(keys.rows())..keys.rows()).to_owned(),
            labels: (0..rows as u32).collect(),
            sink_count: sink_count.min(keys.rows()),
            converged: true,
            iterations_used: 0,
            decode_batches: 0,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.centroids.cols()
    }

    /// One past the highest labeled position.
    pub fn covered_end(&self) -> usize {
        self.sink_count + self.labels.len()
    }

    pub fn label_of(&self, position: usize) -> Option<u32> {
        position.checked_sub(self.sink_count).and_then(|i| self.labels.get(i).copied())
    }

    pub fn is_sink(&self, position: usize) -> bool {
        position < self.sink_count
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Adds the clusters of `fit`, covering the next `fit.labels.len()`
    /// positions, with ids following the existing ones. Returns the new ids.
    fn append(&mut self, fit: KmeansFit) -> std::ops::Range<u32> {
        let base = self.n_clusters() as u32;
        self.centroids.extend_rows(fit.centroids.view());
        self.labels.extend(fit.labels.iter().map(|l| l + base));
        self.converged &= fit.converged;
        self.iterations_used = fit.iterations;
        base..self.n_clusters() as u32
    }
}

/// Plain cosine K-means over every row of `keys`, without sink exemption.
pub fn kmeans_cosine(keys: MatRef<'_>, clusters: usize, seed: u64, max_iters: usize) -> Result<ClusterModel> {
    let fit = kmeans(keys, clusters, DistanceMetric::Cosine, seed, max_iters)?;
    let mut model = ClusterModel::empty(keys.cols(), 0);
    model.append(fit);
    Ok(model)
}

/// Clusters the prompt keys after prefill, exempting the leading sink tokens.
pub fn cluster_prefill(keys: MatRef<'_>, cfg: &ClusterConfig) -> Result<ClusterModel> {
    cfg.validate()?;
    let len = keys.rows();
    if len <= cfg.sink_tokens {
        return Ok(ClusterModel::empty(keys.cols(), len));
    }
    let body = keys.slice_rows(cfg.sink_tokens..len);
    let k = cfg.prefill_clusters(body.rows());
    let fit = kmeans(body, k, cfg.metric, cfg.seed, cfg.max_iters)?;
    let mut model = ClusterModel::empty(keys.cols(), cfg.sink_tokens);
    model.append(fit);
    Ok(model)
}

/// Clusters one batch of freshly generated keys into at most `c_plus` new
/// clusters and appends them. Existing labels and centroids are untouched.
/// Returns the ids minted for the batch (empty for an empty batch).
pub fn cluster_decode_batch(model: &mut ClusterModel, new_keys: MatRef<'_>, cfg: &ClusterConfig) -> Result<std::ops::Range<u32>> {
    cfg.validate()?;
    let n = model.n_clusters() as u32;
    if new_keys.rows() == 0 {
        return Ok(n..n);
    }
    if new_keys.rows() > cfg.decode_batch {
        return Err(invalid(format!(
            "decode batch has {} keys, more than m = {}",
            new_keys.rows(),
            cfg.decode_batch
        )));
    }
    let k = cfg.c_plus.min(new_keys.rows());
    let seed = batch_seed(cfg.seed, model.decode_batches);
    let fit = match kmeans(new_keys, k, cfg.metric, seed, cfg.max_iters) {
        Ok(fit) => fit,
        // An all-zero batch still has to be labeled; keep it as one cluster.
        Err(Error::Degenerate(_)) => KmeansFit {
            centroids: Matrix::zeros(1, new_keys.cols()),
            labels: vec![0; new_keys.rows()],
            converged: true,
            iterations: 0,
            objective: Vec::new(),
        },
        Err(e) => return Err(e),
    };
    model.decode_batches += 1;
    Ok(model.append(fit))
}

fn batch_seed(seed: u64, batch: usize) -> u64 {
    seed ^ (batch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
