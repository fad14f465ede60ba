// Copyright 2020 Alibaba Group Holding Limited.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Exhaustive induced subgraph matching by backtracking.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{bound, Matching, Prepared};
use crate::error::{Error, Result};
use crate::graph::PropertyGraph;
use crate::query::QueryGraph;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactConfig {
    /// Maximum number of matchings to return.
    pub limit: Option<usize>,
    /// With a limit, stop at the limit and flag truncation instead of failing.
    pub allow_truncation: bool,
    /// Abort when materialized matchings would exceed this many bytes.
    pub memory_budget_bytes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchSet {
    /// Sorted lexicographically on the assignment.
    pub matches: Vec<Matching>,
    pub truncated: bool,
}

/// Approximate bytes held per materialized matching.
pub fn matching_footprint(query_vertices: usize) -> usize {
    std::mem::size_of::<Matching>() + 4 * query_vertices
}

struct Plan<'a> {
    p: Prepared<'a>,
    order: Vec<usize>,
    parent: Vec<Option<usize>>,
    candidates: Vec<Vec<u32>>,
    is_candidate: Vec<Vec<bool>>,
}

impl<'a> Plan<'a> {
    fn new(g: &'a PropertyGraph, q: &'a QueryGraph) -> Self {
        let p = Prepared::new(g, q);
        let candidates = p.local_candidates();
        let forest = q.spanning_forest_by(|u| candidates[u].len());
        let parent = forest.parent.iter().map(|x| x.map(|(p, _)| p)).collect();
        let is_candidate = candidates
            .iter()
            .map(|list| {
                let mut mark = vec![false; g.vertex_count()];
                for &v in list {
                    mark[v as usize] = true;
                }
                mark
            })
            .collect();
        Plan {
            p,
            order: forest.order,
            parent,
            candidates,
            is_candidate,
        }
    }

    fn dfs(&self, k: usize, images: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32]) -> bool) -> bool {
        if k == self.order.len() {
            return visit(images);
        }
        let u = self.order[k];
        let assigned = &self.order[..k];
        match self.parent[u] {
            Some(par) => {
                let anchor = images[par];
                for &(v, _) in self.p.g.adjacent(anchor) {
                    if self.is_candidate[u][v as usize] && self.p.extends(u, v, assigned, images) {
                        images[u] = v;
                        if !self.dfs(k + 1, images, visit) {
                            return false;
                        }
                    }
                }
            }
            None => {
                for &v in &self.candidates[u] {
                    if self.p.extends(u, v, assigned, images) {
                        images[u] = v;
                        if !self.dfs(k + 1, images, visit) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Runs the search below a fixed image of the first vertex in the order.
    fn from_root(&self, v: u32, visit: &mut dyn FnMut(&[u32]) -> bool) -> bool {
        let mut images = vec![u32::MAX; self.order.len()];
        images[self.order[0]] = v;
        self.dfs(1, &mut images, visit)
    }
}

/// All induced matchings of `q` in `g`, sorted.
pub fn enumerate_matches(g: &PropertyGraph, q: &QueryGraph, cfg: &ExactConfig) -> Result<MatchSet> {
    let q = &*bound(g, q);
    let plan = Plan::new(g, q);
    let footprint = matching_footprint(q.vertex_count());
    let over_budget = |count: usize| {
        cfg.memory_budget_bytes
            .is_some_and(|b| count.saturating_mul(footprint) > b)
    };
    if plan.order.is_empty() {
        return Ok(MatchSet {
            matches: vec![Vec::new()],
            truncated: false,
        });
    }

    if let Some(limit) = cfg.limit {
        let mut matches = Vec::new();
        let mut overflow = false;
        let mut budget_hit = false;
        let mut images = vec![u32::MAX; plan.order.len()];
        plan.dfs(0, &mut images, &mut |m| {
            if matches.len() == limit {
                overflow = true;
                return false;
            }
            if over_budget(matches.len() + 1) {
                budget_hit = true;
                return false;
            }
            matches.push(m.to_vec());
            true
        });
        if budget_hit {
            return Err(Error::MemoryBudgetExceeded {
                budget: cfg.memory_budget_bytes.unwrap_or_default(),
            });
        }
        if overflow && !cfg.allow_truncation {
            return Err(Error::LimitExceeded(limit));
        }
        matches.sort_unstable();
        return Ok(MatchSet {
            matches,
            truncated: overflow,
        });
    }

    let total = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let root = plan.order[0];
    let parts: Vec<Vec<Matching>> = plan.candidates[root]
        .par_iter()
        .map(|&v| {
            let mut local = Vec::new();
            if abort.load(Ordering::Relaxed) {
                return local;
            }
            plan.from_root(v, &mut |m| {
                let seen = total.fetch_add(1, Ordering::Relaxed) + 1;
                if over_budget(seen) || abort.load(Ordering::Relaxed) {
                    abort.store(true, Ordering::Relaxed);
                    return false;
                }
                local.push(m.to_vec());
                true
            });
            local
        })
        .collect();
    if abort.load(Ordering::Relaxed) {
        return Err(Error::MemoryBudgetExceeded {
            budget: cfg.memory_budget_bytes.unwrap_or_default(),
        });
    }
    let mut matches: Vec<Matching> = parts.into_iter().flatten().collect();
    matches.sort_unstable();
    Ok(MatchSet {
        matches,
        truncated: false,
    })
}

/// Number of induced matchings, without materializing them.
pub fn count_matches(g: &PropertyGraph, q: &QueryGraph) -> u64 {
    let q = &*bound(g, q);
    let plan = Plan::new(g, q);
    if plan.order.is_empty() {
        return 1;
    }
    let root = plan.order[0];
    plan.candidates[root]
        .par_iter()
        .map(|&v| {
            let mut c = 0u64;
            plan.from_root(v, &mut |_| {
                c += 1;
                true
            });
            c
        })
        .sum()
}
