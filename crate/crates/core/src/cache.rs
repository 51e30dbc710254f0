//! Cluster-granularity cache of selected KV across a simulated two-tier store.
//!
//! The fast tier holds every cluster selected during the last `R` decode
//! steps. A selected cluster that is not resident is loaded whole from the
//! backing tier, and its transfer is accounted in tokens and bytes.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheCounters {
    pub clusters_requested: u64,
    pub clusters_hit: u64,
    pub tokens_transferred: u64,
    pub bytes_transferred: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CacheOutcome {
    pub hit_ids: Vec<u32>,
    pub miss_ids: Vec<u32>,
    pub tokens_transferred: u64,
}

#[derive(Debug, Clone)]
pub struct ClusterCache {
    retention: usize,
    head_dim: usize,
    retained: VecDeque<BTreeSet<u32>>,
    resident: BTreeSet<u32>,
    counters: CacheCounters,
}

impl ClusterCache {
    pub fn new(retention: usize, head_dim: usize) -> Result<Self> {
        if retention == 0 {
            return Err(invalid("retention must be at least 1 step"));
        }
        Ok(Self {
            retention,
            head_dim,
            retained: VecDeque::with_capacity(retention),
            resident: BTreeSet::new(),
            counters: CacheCounters::default(),
        })
    }

    pub fn retention(&self) -> usize {
        self.retention
    }

    pub fn counters(&self) -> CacheCounters {
        self.counters
    }

    pub fn resident(&self) -> &BTreeSet<u32> {
        &self.resident
    }

    pub fn is_resident(&self, id: u32) -> bool {
        self.resident.contains(&id)
    }

    /// Bytes moved per token: one key and one value row of `f32`.
    pub fn bytes_per_token(&self) -> u64 {
        2 * self.head_dim as u64 * 4
    }

    /// Splits `selected` into resident hits and misses, charges the misses'
    /// full cluster sizes as transfers, then retains `selected` as the newest
    /// step. `cluster_size(id)` gives a cluster's token count.
    pub fn lookup_and_update(&mut self, selected: &[u32], cluster_size: impl Fn(u32) -> usize) -> CacheOutcome {
        let mut out = CacheOutcome::default();
        let unique: BTreeSet<u32> = selected.iter().copied().collect();
        for &id in &unique {
            if self.resident.contains(&id) {
                out.hit_ids.push(id);
            } else {
                out.miss_ids.push(id);
                out.tokens_transferred += cluster_size(id) as u64;
            }
        }
        self.counters.clusters_requested += unique.len() as u64;
        self.counters.clusters_hit += out.hit_ids.len() as u64;
        self.counters.tokens_transferred += out.tokens_transferred;
        self.counters.bytes_transferred += out.tokens_transferred * self.bytes_per_token();

        if self.retained.len() == self.retention {
            self.retained.pop_front();
        }
        self.retained.push_back(unique);
        self.recompute_resident();
        out
    }

    /// Drops `retired` ids from every retained step and makes sure `new_ids`
    /// start out non-resident.
    pub fn invalidate_on_recluster(&mut self, retired: &[u32], new_ids: &[u32]) {
        if retired.is_empty() && new_ids.is_empty() {
            return;
        }
        for step in &mut self.retained {
            for id in retired.iter().chain(new_ids) {
                step.remove(id);
            }
        }
        self.recompute_resident();
    }

    pub fn hit_rate(&self) -> Result<f64> {
        if self.counters.clusters_requested == 0 {
            return Err(invalid("hit rate is undefined before any request"));
        }
        Ok(self.counters.clusters_hit as f64 / self.counters.clusters_requested as f64)
    }

    fn recompute_resident(&mut self) {
        self.resident = self.retained.iter().flatten().copied().collect();
    }
}
