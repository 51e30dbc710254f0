use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PolicyConfig;
use crate::attention::approx_attention;
use crate::cache::ClusterCache;
use crate::clustering::{cluster_decode_batch, cluster_prefill, ClusterConfig, ClusterModel};
use crate::error::{invalid, Error, Result};
use crate::selection::{
    build_index, page_select_pages, pages_to_tokens, random_select, select_tokens, ClusterIndex, GreedyEvictor, PageRepr,
};
use crate::tensor::MatRef;
use crate::trace::{head_seed, HeadTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Semantic-cluster selection.
    #[default]
    #[serde(rename = "clusterkv")]
    ClusterKv,
    /// Fixed-size pages of consecutive tokens.
    Page,
    /// Exact top-B by attention weight.
    Oracle,
    /// Heavy-hitter eviction without recall.
    Greedy,
    Random,
    /// Attend to everything.
    Full,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [Self::ClusterKv, Self::Page, Self::Oracle, Self::Greedy, Self::Random, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::ClusterKv => "clusterkv",
            Self::Page => "page",
            Self::Oracle => "oracle",
            Self::Greedy => "greedy",
            Self::Random => "random",
            Self::Full => "full",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown policy {s:?}")))
    }
}

pub(super) struct StepView<'a> {
    pub q: &'a [f32],
    /// Every key/value visible at this step.
    pub keys: MatRef<'a>,
    pub values: MatRef<'a>,
    /// Selectable positions: clustered, non-sink tokens.
    pub pool: Range<usize>,
    pub sink: usize,
    pub recency: &'a [usize],
    pub truth: &'a [usize],
}

#[derive(Debug, Default)]
pub(super) struct CacheStep {
    pub units: Vec<u32>,
    pub requested: u64,
    pub hits: u64,
    pub tokens_transferred: u64,
}

pub(super) struct Choice {
    /// Budgeted pool positions, ascending.
    pub tokens: Vec<usize>,
    pub cache: CacheStep,
}

pub(super) enum HeadPolicy {
    ClusterKv {
        cfg: ClusterConfig,
        model: ClusterModel,
        index: ClusterIndex,
        cache: ClusterCache,
        budget: usize,
    },
    Page {
        budget: usize,
        page_size: usize,
        repr: PageRepr,
        cache: ClusterCache,
    },
    Oracle,
    Greedy(GreedyEvictor),
    Random {
        rng: ChaCha8Rng,
        budget: usize,
    },
    Full,
}

fn lookup(cache: &mut ClusterCache, mut units: Vec<u32>, size: impl Fn(u32) -> usize) -> CacheStep {
    units.sort_unstable();
    let out = cache.lookup_and_update(&units, size);
    CacheStep {
        requested: units.len() as u64,
        hits: out.hit_ids.len() as u64,
        tokens_transferred: out.tokens_transferred,
        units,
    }
}

impl HeadPolicy {
    pub fn new(kind: PolicyKind, cfg: &PolicyConfig, trace: &HeadTrace, layer: usize, head: usize) -> Result<Self> {
        let d = trace.head_dim();
        Ok(match kind {
            PolicyKind::ClusterKv => {
                let ccfg = ClusterConfig {
                    seed: head_seed(cfg.cluster.seed, layer, head),
                    ..cfg.cluster.clone()
                };
                let model = cluster_prefill(trace.prompt_keys.view(), &ccfg)?;
                Self::ClusterKv {
                    index: build_index(&model),
                    model,
                    cfg: ccfg,
                    cache: ClusterCache::new(cfg.retention, d)?,
                    budget: cfg.budget,
                }
            }
            PolicyKind::Page => Self::Page {
                budget: cfg.budget,
                page_size: cfg.page_size,
                repr: cfg.page_repr,
                cache: ClusterCache::new(cfg.retention, d)?,
            },
            PolicyKind::Oracle => Self::Oracle,
            PolicyKind::Greedy => {
                let mut g = GreedyEvictor::new(cfg.budget);
                g.admit(cfg.cluster.sink_tokens.min(trace.prompt_len())..trace.prompt_len());
                Self::Greedy(g)
            }
            PolicyKind::Random => Self::Random {
                rng: ChaCha8Rng::seed_from_u64(head_seed(cfg.seed ^ 0x5eed, layer, head)),
                budget: cfg.budget,
            },
            PolicyKind::Full => Self::Full,
        })
    }

    pub fn kmeans_iterations(&self) -> Vec<usize> {
        match self {
            Self::ClusterKv { model, .. } if model.n_clusters() > 0 => vec![model.iterations_used],
            _ => Vec::new(),
        }
    }

    /// A completed decode batch joins the selectable pool.
    pub fn register_batch(&mut self, batch_keys: MatRef<'_>, positions: Range<usize>, iterations: &mut Vec<usize>) -> Result<()> {
        match self {
            Self::ClusterKv {
                cfg, model, index, cache, ..
            } => {
                debug_assert_eq!(model.covered_end(), positions.start);
                let ids = cluster_decode_batch(model, batch_keys, cfg)?;
                if !ids.is_empty() {
                    iterations.push(model.iterations_used);
                }
                *index = build_index(model);
                cache.invalidate_on_recluster(&[], &ids.collect::<Vec<_>>());
            }
            Self::Greedy(g) => g.admit(positions),
            _ => {}
        }
        Ok(())
    }

    pub fn select(&mut self, v: &StepView<'_>) -> Result<Choice> {
        Ok(match self {
            Self::ClusterKv {
                model,
                index,
                cache,
                budget,
                ..
            } => {
                let sel = select_tokens(v.q, model, index, *budget, &[]);
                let tokens = sel.token_ids.iter().copied().filter(|&t| t >= model.sink_count).collect();
                let units = sel.taken_clusters().iter().map(|&c| c as u32).collect();
                let sizes = &index.sizes;
                Choice {
                    tokens,
                    cache: lookup(cache, units, |id| sizes[id as usize]),
                }
            }
            Self::Page {
                budget,
                page_size,
                repr,
                cache,
            } => {
                let pool_keys = v.keys.slice_rows(v.pool.clone());
                let (pages, _) = page_select_pages(v.q, pool_keys, *budget, *page_size, *repr);
                let n = pool_keys.rows();
                let tokens = pages_to_tokens(&pages, *page_size, n)
                    .into_iter()
                    .map(|t| t + v.pool.start)
                    .collect();
                let ps = *page_size;
                let units = pages.iter().map(|&p| p as u32).collect();
                Choice {
                    tokens,
                    cache: lookup(cache, units, |p| ((p as usize + 1) * ps).min(n) - p as usize * ps),
                }
            }
            Self::Oracle => Choice {
                tokens: v.truth.to_vec(),
                cache: CacheStep::default(),
            },
            Self::Full => Choice {
                tokens: v.pool.clone().collect(),
                cache: CacheStep::default(),
            },
            Self::Random { rng, budget } => {
                let pool: Vec<usize> = v.pool.clone().collect();
                Choice {
                    tokens: random_select(&pool, *budget, rng),
                    cache: CacheStep::default(),
                }
            }
            Self::Greedy(g) => {
                let retained = g.retained();
                let mut attended: Vec<usize> = retained.iter().copied().chain(0..v.sink).chain(v.recency.iter().copied()).collect();
                attended.sort_unstable();
                attended.dedup();
                let tokens = if attended.is_empty() {
                    Vec::new()
                } else {
                    let att = approx_attention(v.q, v.keys, v.values, &attended)?;
                    g.observe(attended.iter().copied().zip(att.weights))
                };
                Choice {
                    tokens,
                    cache: CacheStep::default(),
                }
            }
        })
    }
}
