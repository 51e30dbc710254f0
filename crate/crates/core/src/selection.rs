//! Budgeted token selection.
//!
//! Clusters are ranked by the inner product of the query with their
//! centroids, gathered in rank order until the budget is covered, and the
//! last cluster is trimmed to fit. The same module hosts the baselines the
//! simulator compares against: exact top-B, page-granularity selection,
//! permanent greedy eviction, and uniform random sampling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::tensor::{dot, MatRef};

/// Cluster-major token index: cluster sizes, their prefix offsets and the
/// token positions grouped by cluster.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterIndex {
    pub sizes: Vec<usize>,
    /// Token positions grouped by cluster id, ascending within each cluster.
    pub sorted_token_ids: Vec<usize>,
    /// `cluster_start[c]..cluster_start[c + 1]` is cluster `c`'s slice; the
    /// vector has one trailing entry equal to the labeled token count.
    pub cluster_start: Vec<usize>,
}

impl ClusterIndex {
    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.sorted_token_ids[self.cluster_start[cluster]..self.cluster_start[cluster + 1]]
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.sorted_token_ids.len()
    }
}

/// Builds the cluster-major index with a counting sort over labels.
pub fn build_index(model: &ClusterModel) -> ClusterIndex {
    let sizes = model.cluster_sizes();
    let mut cluster_start = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    cluster_start.push(0);
    for &s in &sizes {
        acc += s;
        cluster_start.push(acc);
    }
    let mut cursor = cluster_start.clone();
    let mut sorted_token_ids = vec![0; acc];
    for (i, &l) in model.labels.iter().enumerate() {
        let slot = &mut cursor[l as usize];
        sorted_token_ids[*slot] = model.sink_count + i;
        *slot += 1;
    }
    ClusterIndex {
        sizes,
        sorted_token_ids,
        cluster_start,
    }
}

/// Inner product of the query with every (raw mean) centroid.
pub fn score_clusters(q: &[f32], model: &ClusterModel) -> Vec<f64> {
    model.centroids.view().iter_rows().map(|c| dot(q, c)).collect()
}

/// Descending by score, ascending by id on ties.
fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
}

pub fn rank_clusters(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(by_score_desc(scores));
    order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionResult {
    /// Every cluster id, best first.
    pub ranked_clusters: Vec<usize>,
    pub n_clusters_taken: usize,
    /// Selected positions, ascending: budgeted cluster members plus sinks and
    /// the recency window.
    pub token_ids: Vec<usize>,
    /// Members of the last taken cluster left out to respect the budget.
    pub trimmed_from_last: usize,
    pub budget: usize,
}

impl SelectionResult {
    pub fn taken_clusters(&self) -> &[usize] {
        &self.ranked_clusters[..self.n_clusters_taken]
    }
}

/// Takes clusters in descending score order until their cumulative size
/// reaches `budget`, trimming the last taken cluster down to its
/// lowest-position members. Sinks and `recency` ids are added on top of the
/// budget.
pub fn select_tokens(q: &[f32], model: &ClusterModel, index: &ClusterIndex, budget: usize, recency: &[usize]) -> SelectionResult {
    let ranked = rank_clusters(&score_clusters(q, model));
    select_ranked(ranked, model.sink_count, index, budget, recency)
}

/// Selection given an explicit cluster ranking.
pub fn select_ranked(ranked: Vec<usize>, sink_count: usize, index: &ClusterIndex, budget: usize, recency: &[usize]) -> SelectionResult {
    // Prefix sums over the sizes reordered by rank.
    let mut prefix = Vec::with_capacity(ranked.len());
    let mut acc = 0;
    for &c in &ranked {
        acc += index.sizes[c];
        prefix.push(acc);
    }
    let (taken, trimmed) = match prefix.partition_point(|&p| p < budget) {
        n if n == prefix.len() => (n, 0),
        pos => (pos + 1, prefix[pos] - budget),
    };

    let mut token_ids: Vec<usize> = Vec::with_capacity(budget.min(acc) + sink_count + recency.len());
    for (rank, &c) in ranked[..taken].iter().enumerate() {
        let members = index.members(c);
        let keep = if rank + 1 == taken {
            members.len() - trimmed
        } else {
            members.len()
        };
        token_ids.extend_from_slice(&members[..keep]);
    }
    token_ids.extend(0..sink_count);
    token_ids.extend_from_slice(recency);
    token_ids.sort_unstable();
    token_ids.dedup();
    SelectionResult {
        ranked_clusters: ranked,
        n_clusters_taken: taken,
        token_ids,
        trimmed_from_last: trimmed,
        budget,
    }
}

/// Positions of the `budget` largest `q·k` over the rows of `keys`, ties to
/// the lowest position. Returned ascending.
pub fn exact_topb(q: &[f32], keys: MatRef<'_>, budget: usize) -> Vec<usize> {
    let scores: Vec<f64> = keys.iter_rows().map(|k| dot(q, k)).collect();
    top_by_score(&scores, budget)
}

pub(crate) fn top_by_score(scores: &[f64], budget: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    if budget < ids.len() {
        let cmp = by_score_desc(scores);
        if budget > 0 {
            ids.select_nth_unstable_by(budget - 1, &cmp);
        }
        ids.truncate(budget);
    }
    ids.sort_unstable();
    ids
}

/// Page representative used by the page-granularity baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PageRepr {
    /// Per-channel maximum of the page's keys, scored by inner product.
    #[default]
    Max,
    /// Per-channel min and max; the score is the upper bound
    /// `Σ max(q_c·max_c, q_c·min_c)`.
    MaxMin,
}

impl std::str::FromStr for PageRepr {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "max-min" | "maxmin" => Ok(Self::MaxMin),
            other => Err(crate::Error::InvalidArgument(format!("unknown page representative {other:?}"))),
        }
    }
}

/// Per-page scores for consecutive pages of `page_size` rows.
pub fn page_scores(q: &[f32], keys: MatRef<'_>, page_size: usize, repr: PageRepr) -> Vec<f64> {
    assert!(page_size >= 1, "page_size must be at least 1");
    let d = keys.cols();
    let n = keys.rows();
    let mut scores = Vec::with_capacity(n.div_ceil(page_size));
    let mut hi = vec![0f32; d];
    let mut lo = vec![0f32; d];
    for start in (0..n).step_by(page_size) {
        let end = (start + page_size).min(n);
        hi.copy_from_slice(keys.row(start));
        lo.copy_from_slice(keys.row(start));
        for i in start + 1..end {
            for ((h, l), &x) in hi.iter_mut().zip(lo.iter_mut()).zip(keys.row(i)) {
                *h = h.max(x);
                *l = l.min(x);
            }
        }
        scores.push(match repr {
            PageRepr::Max => dot(q, &hi),
            PageRepr::MaxMin => q
                .iter()
                .zip(hi.iter().zip(&lo))
                .map(|(&qc, (&h, &l))| (f64::from(qc) * f64::from(h)).max(f64::from(qc) * f64::from(l)))
                .sum(),
        });
    }
    scores
}

/// Page-granularity selection: the top `budget / page_size` pages by
/// representative score, returned as the ascending list of their rows.
pub fn page_select(q: &[f32], keys: MatRef<'_>, budget: usize, page_size: usize, repr: PageRepr) -> Vec<usize> {
    let (pages, _) = page_select_pages(q, keys, budget, page_size, repr);
    pages_to_tokens(&pages, page_size, keys.rows())
}

/// Selected page ids (ascending) and the page count.
pub fn page_select_pages(q: &[f32], keys: MatRef<'_>, budget: usize, page_size: usize, repr: PageRepr) -> (Vec<usize>, usize) {
    let scores = page_scores(q, keys, page_size, repr);
    let n_pages = scores.len();
    (top_by_score(&scores, budget / page_size), n_pages)
}

pub fn pages_to_tokens(pages: &[usize], page_size: usize, n_rows: usize) -> Vec<usize> {
    pages
        .iter()
        .flat_map(|&p| p * page_size..((p + 1) * page_size).min(n_rows))
        .collect()
}

/// Non-recallable heavy-hitter selection: keeps at most `budget` tokens
/// ranked by accumulated attention weight. Once evicted, a token is never
/// admitted again.
#[derive(Debug, Clone, Default)]
pub struct GreedyEvictor {
    budget: usize,
    scores: BTreeMap<usize, f64>,
    evicted: BTreeSet<usize>,
}

impl GreedyEvictor {
    pub fn new(budget: usize) -> Self {
        Self { budget, ..Self::default() }
    }

    /// Adds fresh candidates with zero accumulated weight. Previously evicted
    /// ids are ignored.
    pub fn admit(&mut self, ids: impl IntoIterator<Item = usize>) {
        for id in ids {
            if !self.evicted.contains(&id) {
                self.scores.entry(id).or_insert(0.0);
            }
        }
    }

    /// Currently retained ids, ascending.
    pub fn retained(&self) -> Vec<usize> {
        self.scores.keys().copied().collect()
    }

    pub fn is_evicted(&self, id: usize) -> bool {
        self.evicted.contains(&id)
    }

    /// Accumulates one step of attention weights over retained ids, then evicts
    /// down to the budget (lowest accumulated weight first, older ids first on
    /// ties). Returns the retained set after eviction.
    pub fn observe(&mut self, weights: impl IntoIterator<Item = (usize, f64)>) -> Vec<usize> {
        for (id, w) in weights {
            if let Some(s) = self.scores.get_mut(&id) {
                *s += w;
            }
        }
        if self.scores.len() > self.budget {
            let ids = self.retained();
            let scores: Vec<f64> = ids.iter().map(|id| self.scores[id]).collect();
            let keep: BTreeSet<usize> = top_by_score(&scores, self.budget).into_iter().map(|i| ids[i]).collect();
            for id in ids {
                if !keep.contains(&id) {
                    self.scores.remove(&id);
                    self.evicted.insert(id);
                }
            }
        }
        self.retained()
    }
}

/// Uniform sample of `budget` ids from `pool` without replacement, ascending.
pub fn random_select(pool: &[usize], budget: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out: Vec<usize> = rand::seq::index::sample(rng, pool.len(), budget.min(pool.len()))
        .into_iter()
        .map(|i| pool[i])
        .collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn model_with_labels(labels: &[u32], d: usize) -> ClusterModel {
        let c = labels.iter().max().map_or(0, |&m| m as usize + 1);
        ClusterModel {
            centroids: Matrix::zeros(c, d),
            labels: labels.to_vec(),
            sink_count: 0,
            converged: true,
            iterations_used: 1,
            decode_batches: 0,
        }
    }

    #[test]
    fn index_of_worked_example() {
        let model = model_with_labels(&[2, 0, 1, 1, 1, 2], 2);
        let idx = build_index(&model);
        assert_eq!(idx.sizes, vec![1, 3, 2]);
        assert_eq!(idx.sorted_token_ids, vec![1, 2, 3, 4, 0, 5]);
        assert_eq!(idx.cluster_start, vec![0, 1, 4, 6]);
    }

    #[test]
    fn singleton_index_is_identity() {
        let model = model_with_labels(&[0, 1, 2, 3, 4], 2);
        let idx = build_index(&model);
        assert_eq!(idx.sorted_token_ids, vec![0, 1, 2, 3, 4]);
        assert!(idx.sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn empty_model_gives_empty_index() {
        let idx = build_index(&ClusterModel::empty(4, 16));
        assert_eq!(idx.n_clusters(), 0);
        assert_eq!(idx.n_tokens(), 0);
        let sel = select_tokens(&[1.0; 4], &ClusterModel::empty(4, 16), &idx, 8, &[20]);
        assert_eq!(sel.n_clusters_taken, 0);
        assert_eq!(sel.token_ids, (0..16).chain([20]).collect::<Vec<_>>());
    }

    #[test]
    fn index_offsets_positions_past_sinks() {
        let mut model = model_with_labels(&[1, 0, 1], 2);
        model.sink_count = 4;
        let idx = build_index(&model);
        assert_eq!(idx.sorted_token_ids, vec![5, 4, 6]);
    }

    #[test]
    fn zero_query_ranks_by_id() {
        let model = ClusterModel {
            centroids: Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]]).unwrap(),
            ..model_with_labels(&[0, 1, 2], 2)
        };
        let scores = score_clusters(&[0.0, 0.0], &model);
        assert!(scores.iter().all(|&s| s == 0.0));
        assert_eq!(rank_clusters(&scores), vec![0, 1, 2]);
    }

    #[test]
    fn query_along_one_centroid_ranks_it_first() {
        let model = ClusterModel {
            centroids: Matrix::from_rows(&[[0.0, 1.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -3.0]]).unwrap(),
            ..model_with_labels(&[0, 1, 2], 3)
        };
        let ranked = rank_clusters(&score_clusters(&[1.0, 0.0, 0.0], &model));
        assert_eq!(ranked[0], 1);
    }

    #[test]
    fn trims_last_cluster_to_lowest_positions() {
        // Cluster 0 = {0,2,4,6}, cluster 1 = {1,3,5,7}.
        let model = model_with_labels(&[0, 1, 0, 1, 0, 1, 0, 1], 1);
        let idx = build_index(&model);
        let sel = select_ranked(vec![0, 1], 0, &idx, 6, &[]);
        assert_eq!(sel.n_clusters_taken, 2);
        assert_eq!(sel.trimmed_from_last, 2);
        assert_eq!(sel.token_ids, vec![0, 1, 2, 3, 4, 6]);
    }

    #[test]
    fn budget_beyond_supply_takes_everything() {
        let mut model = model_with_labels(&[0, 1, 1, 2], 1);
        model.sink_count = 2;
        let idx = build_index(&model);
        let sel = select_ranked(vec![2, 0, 1], 2, &idx, 100, &[6, 7]);
        assert_eq!(sel.n_clusters_taken, 3);
        assert_eq!(sel.trimmed_from_last, 0);
        assert_eq!(sel.token_ids, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn exact_topb_reference_cases() {
        let keys = Matrix::from_rows(&[[0.1, 0.2], [1000.0, 0.0], [0.3, -0.1], [0.0, 0.0]]).unwrap();
        assert_eq!(exact_topb(&[1.0, 0.0], keys.view(), 1), vec![1]);
        assert_eq!(exact_topb(&[1.0, 0.0], keys.view(), 4), vec![0, 1, 2, 3]);
        assert_eq!(exact_topb(&[0.0, 0.0], keys.view(), 2), vec![0, 1]);
        assert!(exact_topb(&[1.0, 0.0], keys.view(), 0).is_empty());
    }

    #[test]
    fn identical_keys_pick_lowest_pages() {
        let keys = Matrix::from_vec(64, 2, [0.5f32, -0.25].repeat(64)).unwrap();
        let sel = page_select(&[1.0, 1.0], keys.view(), 32, 16, PageRepr::Max);
        assert_eq!(sel, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn page_representative_is_channel_max() {
        let keys = Matrix::from_rows(&[[1.0, -5.0], [-2.0, 3.0], [0.0, 0.0]]).unwrap();
        let s = page_scores(&[1.0, 1.0], keys.view(), 2, PageRepr::Max);
        assert_eq!(s, vec![4.0, 0.0]);
        let s = page_scores(&[-1.0, 1.0], keys.view(), 2, PageRepr::MaxMin);
        assert_eq!(s, vec![5.0, 0.0]);
    }

    #[test]
    fn partial_last_page_returns_only_existing_rows() {
        let keys = Matrix::from_rows(&[[0.0], [0.0], [0.0], [0.0], [9.0]]).unwrap();
        assert_eq!(page_select(&[1.0], keys.view(), 2, 2, PageRepr::Max), vec![4]);
    }

    #[test]
    fn greedy_evictor_never_recalls() {
        let mut g = GreedyEvictor::new(2);
        g.admit(0..4);
        let kept = g.observe([(0, 0.1), (1, 0.5), (2, 0.3), (3, 0.1)]);
        assert_eq!(kept, vec![1, 2]);
        assert!(g.is_evicted(0) && g.is_evicted(3));
        g.admit([0, 4]);
        assert_eq!(g.retained(), vec![1, 2, 4]);
        let kept = g.observe([(4, 0.9)]);
        assert_eq!(kept, vec![1, 4]);
    }

    #[test]
    fn greedy_with_ample_budget_keeps_all() {
        let mut g = GreedyEvictor::new(10);
        g.admit(0..5);
        assert_eq!(g.observe((0..5).map(|i| (i, 0.2))), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn random_select_is_a_subset_without_repeats() {
        use rand::SeedableRng;
        let pool: Vec<usize> = (10..110).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let s = random_select(&pool, 30, &mut rng);
        assert_eq!(s.len(), 30);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|x| pool.contains(x)));
        assert_eq!(random_select(&pool, 500, &mut rng).len(), 100);
    }
}
