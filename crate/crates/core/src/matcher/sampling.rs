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

//! Uniform match sampling through weighted spanning-tree embeddings.
//!
//! Every induced matching restricts to exactly one embedding of the query's
//! spanning forest. Embeddings are drawn with probability proportional to
//! their subtree weights, i.e. uniformly, and rejected unless they extend to a
//! matching, so accepted draws are uniform over matchings.

use rand::Rng;
use rayon::prelude::*;

use super::{bound, Matching, Prepared};
use crate::error::{Error, Result};
use crate::graph::PropertyGraph;
use crate::query::{QueryGraph, SpanningForest};
use crate::rng::{stream_rng, StreamRng};

pub const DRAWS_PER_STREAM: u64 = 4096;

/// Candidate children of one tree edge, in CSR layout over parent candidates.
#[derive(Debug, Clone, Default)]
struct ChildLists {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl ChildLists {
    fn segment(&self, parent_pos: usize) -> std::ops::Range<usize> {
        self.offsets[parent_pos]..self.offsets[parent_pos + 1]
    }
}

#[derive(Debug, Clone)]
pub struct CandidateSpace {
    pub forest: SpanningForest,
    /// `candidates[u]`: graph vertices admissible for query vertex `u`, sorted.
    pub candidates: Vec<Vec<u32>>,
    /// `children[c]`: for non-roots, child candidate positions per parent candidate.
    children: Vec<ChildLists>,
    pub empty: bool,
}

impl CandidateSpace {
    /// Positions (into `candidates[c]`) reachable from parent candidate `parent_pos`.
    pub fn child_candidates(&self, c: usize, parent_pos: usize) -> &[u32] {
        let lists = &self.children[c];
        &lists.targets[lists.segment(parent_pos)]
    }
}

/// Builds candidate sets from labels and local predicates, runs one
/// refinement pass over the query edges and indexes tree-edge children.
pub fn build_candidate_space(g: &PropertyGraph, q: &QueryGraph) -> CandidateSpace {
    let q = &*bound(g, q);
    let p = Prepared::new(g, q);
    let n = q.vertex_count();
    let mut candidates = p.local_candidates();

    let mark = |list: &[u32]| {
        let mut m = vec![false; g.vertex_count()];
        for &v in list {
            m[v as usize] = true;
        }
        m
    };
    for e in 0..q.edge_count() {
        let (a, b) = q.edge_ends(e);
        for (x, y) in [(a, b), (b, a)] {
            let other = mark(&candidates[y]);
            candidates[x].retain(|&v| {
                g.adjacent(v)
                    .iter()
                    .any(|&(w, ge)| other[w as usize] && p.edge_ok(e, ge))
            });
        }
    }

    let forest = q.spanning_forest();
    let mut position = vec![Vec::new(); n];
    for u in 0..n {
        let mut pos = vec![u32::MAX; g.vertex_count()];
        for (i, &v) in candidates[u].iter().enumerate() {
            pos[v as usize] = i as u32;
        }
        position[u] = pos;
    }
    let mut children = vec![ChildLists::default(); n];
    for c in 0..n {
        let Some((par, e)) = forest.parent[c] else { continue };
        let mut lists = ChildLists {
            offsets: Vec::with_capacity(candidates[par].len() + 1),
            targets: Vec::new(),
        };
        lists.offsets.push(0);
        for &v in &candidates[par] {
            for &(w, ge) in g.adjacent(v) {
                let pos = position[c][w as usize];
                if pos != u32::MAX && p.edge_ok(e, ge) {
                    lists.targets.push(pos);
                }
            }
            lists.offsets.push(lists.targets.len());
        }
        children[c] = lists;
    }
    let empty = candidates.iter().any(Vec::is_empty);
    CandidateSpace {
        forest,
        candidates,
        children,
        empty,
    }
}

#[derive(Debug, Clone)]
pub struct TreeWeightTable {
    /// `weights[u][i]`: embeddings of the subtree at `u` with `u` on candidate `i`.
    pub weights: Vec<Vec<u128>>,
    /// Per non-root `c`: running sums of child weights, restarting at each parent segment.
    cumulative: Vec<Vec<u128>>,
    /// Per component: running sums of root weights.
    root_cumulative: Vec<Vec<u128>>,
    pub component_totals: Vec<u128>,
    /// Product of component totals.
    pub total: u128,
}

pub fn compute_tree_weights(cs: &CandidateSpace) -> Result<TreeWeightTable> {
    let n = cs.candidates.len();
    let forest = &cs.forest;
    let mut weights: Vec<Vec<u128>> = cs.candidates.iter().map(|c| vec![1; c.len()]).collect();
    let mut cumulative = vec![Vec::new(); n];

    for &u in forest.order.iter().rev() {
        for &c in &forest.children[u] {
            let lists = &cs.children[c];
            let mut cum = Vec::with_capacity(lists.targets.len());
            for i in 0..cs.candidates[u].len() {
                let mut acc: u128 = 0;
                for &t in &lists.targets[lists.segment(i)] {
                    acc = acc
                        .checked_add(weights[c][t as usize])
                        .ok_or(Error::WeightOverflow)?;
                    cum.push(acc);
                }
                weights[u][i] = weights[u][i].checked_mul(acc).ok_or(Error::WeightOverflow)?;
            }
            cumulative[c] = cum;
        }
    }

    let mut root_cumulative = Vec::with_capacity(forest.roots.len());
    let mut component_totals = Vec::with_capacity(forest.roots.len());
    let mut total: u128 = 1;
    for &r in &forest.roots {
        let mut acc: u128 = 0;
        let mut cum = Vec::with_capacity(weights[r].len());
        for &w in &weights[r] {
            acc = acc.checked_add(w).ok_or(Error::WeightOverflow)?;
            cum.push(acc);
        }
        root_cumulative.push(cum);
        component_totals.push(acc);
        total = total.checked_mul(acc).ok_or(Error::WeightOverflow)?;
    }
    Ok(TreeWeightTable {
        weights,
        cumulative,
        root_cumulative,
        component_totals,
        total,
    })
}

#[derive(Debug, Clone)]
pub struct SampleConfig {
    /// Number of draws.
    pub trials: u64,
    pub seed: u64,
    /// Enumerate all tree embeddings when there are no more than `trials`.
    pub exact_fallback: bool,
}

impl SampleConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        SampleConfig {
            trials,
            seed,
            exact_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    /// Accepted draws in draw order; duplicates are kept. Sorted and distinct when `exact`.
    pub matches: Vec<Matching>,
    pub trials: u64,
    pub accepted: u64,
    pub tree_weight: u128,
    pub estimated_total: f64,
    pub scale_factor: f64,
    pub exact: bool,
    pub seed: u64,
}

/// Index `i` with `cum[i-1] <= x < cum[i]` in a non-decreasing running sum.
#[inline]
fn pick(cum: &[u128], x: u128) -> usize {
    cum.partition_point(|&c| c <= x)
}

struct Sampler<'a> {
    cs: &'a CandidateSpace,
    wt: &'a TreeWeightTable,
    p: Prepared<'a>,
}

impl Sampler<'_> {
    /// One tree embedding drawn with probability weight / total, as candidate positions.
    fn draw(&self, rng: &mut StreamRng, pos: &mut [usize], out: &mut [u32]) {
        let forest = &self.cs.forest;
        for (ci, &r) in forest.roots.iter().enumerate() {
            let x = rng.gen_range(0..self.wt.component_totals[ci]);
            pos[r] = pick(&self.wt.root_cumulative[ci], x);
        }
        for &u in &forest.order {
            for &c in &forest.children[u] {
                let seg = self.cs.children[c].segment(pos[u]);
                let cum = &self.wt.cumulative[c][seg.clone()];
                let hi = *cum.last().expect("non-zero weight implies children");
                let x = rng.gen_range(0..hi);
                let k = pick(cum, x);
                pos[c] = self.cs.children[c].targets[seg.start + k] as usize;
            }
        }
        for (u, &i) in pos.iter().enumerate() {
            out[u] = self.cs.candidates[u][i];
        }
    }

    fn accept(&self, m: &[u32]) -> bool {
        self.p.verify(m)
    }

    fn enumerate(&self, k: usize, pos: &mut Vec<usize>, out: &mut Vec<Matching>) {
        let forest = &self.cs.forest;
        if k == forest.order.len() {
            let m: Matching = pos
                .iter()
                .enumerate()
                .map(|(u, &i)| self.cs.candidates[u][i])
                .collect();
            if self.accept(&m) {
                out.push(m);
            }
            return;
        }
        let u = forest.order[k];
        match forest.parent[u] {
            None => {
                for i in 0..self.cs.candidates[u].len() {
                    pos[u] = i;
                    self.enumerate(k + 1, pos, out);
                }
            }
            Some((par, _)) => {
                let lists = &self.cs.children[u];
                for t in lists.segment(pos[par]) {
                    pos[u] = lists.targets[t] as usize;
                    self.enumerate(k + 1, pos, out);
                }
            }
        }
    }
}

/// Draws `trials` tree embeddings and keeps those that are induced matchings.
pub fn sample_matches(g: &PropertyGraph, q: &QueryGraph, cfg: &SampleConfig) -> Result<SampleResult> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let q = &*bound(g, q);
    let cs = build_candidate_space(g, q);
    let wt = compute_tree_weights(&cs)?;
    let sampler = Sampler {
        cs: &cs,
        wt: &wt,
        p: Prepared::new(g, q),
    };
    let n = q.vertex_count();

    if wt.total == 0 || (cfg.exact_fallback && wt.total <= cfg.trials as u128) {
        let mut matches = Vec::new();
        if wt.total > 0 {
            sampler.enumerate(0, &mut vec![0; n], &mut matches);
        }
        matches.sort_unstable();
        let accepted = matches.len() as u64;
        return Ok(SampleResult {
            matches,
            trials: cfg.trials,
            accepted,
            tree_weight: wt.total,
            estimated_total: accepted as f64,
            scale_factor: 1.0,
            exact: true,
            seed: cfg.seed,
        });
    }

    let streams = cfg.trials.div_ceil(DRAWS_PER_STREAM);
    let parts: Vec<Vec<Matching>> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let draws = DRAWS_PER_STREAM.min(cfg.trials - s * DRAWS_PER_STREAM);
            let mut rng = stream_rng(cfg.seed, s);
            let mut pos = vec![0usize; n];
            let mut m = vec![0u32; n];
            let mut kept = Vec::new();
            for _ in 0..draws {
                sampler.draw(&mut rng, &mut pos, &mut m);
                if sampler.accept(&m) {
                    kept.push(m.clone());
                }
            }
            kept
        })
        .collect();
    let matches: Vec<Matching> = parts.into_iter().flatten().collect();
    let accepted = matches.len() as u64;
    let scale_factor = wt.total as f64 / cfg.trials as f64;
    Ok(SampleResult {
        matches,
        trials: cfg.trials,
        accepted,
        tree_weight: wt.total,
        estimated_total: scale_factor * accepted as f64,
        scale_factor,
        exact: false,
        seed: cfg.seed,
    })
}
