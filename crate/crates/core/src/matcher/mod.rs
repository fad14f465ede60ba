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

//! Induced subgraph matching: exhaustive enumeration and tree sampling.

pub mod exact;
pub mod sampling;

use std::borrow::Cow;

use crate::graph::{LabelId, PropertyGraph};
use crate::query::QueryGraph;

pub use exact::{count_matches, enumerate_matches, matching_footprint, ExactConfig, MatchSet};
pub use sampling::{
    build_candidate_space, compute_tree_weights, sample_matches, CandidateSpace, SampleConfig,
    SampleResult, TreeWeightTable,
};

/// Assignment of query vertices (by position) to dense graph vertices.
pub type Matching = Vec<u32>;

/// A query resolved against one graph's label table.
pub(crate) struct Prepared<'a> {
    pub g: &'a PropertyGraph,
    pub q: &'a QueryGraph,
    vlabel: Vec<Option<LabelId>>,
    elabel: Vec<Option<LabelId>>,
    /// `pair_edge[a * n + b]`: query edge between `a` and `b`, if any.
    pair_edge: Vec<Option<usize>>,
}

impl<'a> Prepared<'a> {
    pub fn new(g: &'a PropertyGraph, q: &'a QueryGraph) -> Self {
        let n = q.vertex_count();
        let vlabel = q
            .vertices()
            .iter()
            .map(|v| g.label_id(&v.label).filter(|_| g.is_vertex_label(&v.label)))
            .collect();
        let elabel = q
            .edges()
            .iter()
            .map(|e| g.label_id(&e.label).filter(|_| g.is_edge_label(&e.label)))
            .collect();
        let mut pair_edge = vec![None; n * n];
        for e in 0..q.edge_count() {
            let (a, b) = q.edge_ends(e);
            pair_edge[a * n + b] = Some(e);
            pair_edge[b * n + a] = Some(e);
        }
        Prepared {
            g,
            q,
            vlabel,
            elabel,
            pair_edge,
        }
    }

    pub fn n(&self) -> usize {
        self.q.vertex_count()
    }

    #[inline]
    pub fn query_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.pair_edge[a * self.n() + b]
    }

    /// Label and predicates of query vertex `u` hold on `v`.
    pub fn vertex_ok(&self, u: usize, v: u32) -> bool {
        match self.vlabel[u] {
            Some(l) if self.g.vertex_label(v) == l => self.q.vertex(u)
                .predicates
                .iter()
                .all(|p| p.eval(self.g.vertex_prop(v, &p.prop))),
            _ => false,
        }
    }

    /// Label and predicates of query edge `e` hold on graph edge `ge`.
    pub fn edge_ok(&self, e: usize, ge: u32) -> bool {
        match self.elabel[e] {
            Some(l) if self.g.edge(ge).label == l => self.q.edges()[e]
                .predicates
                .iter()
                .all(|p| p.eval(self.g.edge_prop(ge, &p.prop))),
            _ => false,
        }
    }

    /// Candidates of each query vertex from labels and local predicates.
    pub fn local_candidates(&self) -> Vec<Vec<u32>> {
        (0..self.n())
            .map(|u| match self.vlabel[u] {
                Some(l) => self
                    .g
                    .vertices_with_label(l)
                    .iter()
                    .copied()
                    .filter(|&v| self.vertex_ok(u, v))
                    .collect(),
                None => Vec::new(),
            })
            .collect()
    }

    /// Whether `u -> v` is consistent with the already-assigned vertices
    /// `assigned` (query positions with their images): injectivity, edge
    /// preservation and induced non-edges.
    #[inline]
    pub fn extends(&self, u: usize, v: u32, assigned: &[usize], images: &[u32]) -> bool {
        for &w in assigned {
            let img = images[w];
            if img == v {
                return false;
            }
            let ge = self.g.edge_between(v, img);
            match (self.query_edge(u, w), ge) {
                (Some(e), Some(ge)) => {
                    if !self.edge_ok(e, ge) {
                        return false;
                    }
                }
                (None, None) => {}
                _ => return false,
            }
        }
        true
    }

    /// Full check of a complete assignment.
    pub fn verify(&self, m: &[u32]) -> bool {
        let n = self.n();
        if m.len() != n {
            return false;
        }
        for u in 0..n {
            if !self.vertex_ok(u, m[u]) {
                return false;
            }
            for w in 0..u {
                if m[w] == m[u] {
                    return false;
                }
                match (self.query_edge(u, w), self.g.edge_between(m[u], m[w])) {
                    (Some(e), Some(ge)) if self.edge_ok(e, ge) => {}
                    (None, None) => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

/// Independent check that `m` is an induced matching of `q` in `g`.
pub fn is_valid_matching(g: &PropertyGraph, q: &QueryGraph, m: &[u32]) -> bool {
    let q = bound(g, q);
    Prepared::new(g, &q).verify(m)
}

/// `q` with predicate literals coerced to the graph's declared types. A query
/// that does not bind (unknown label or property) is used as written and
/// simply matches nothing where it cannot apply.
pub(crate) fn bound<'q>(g: &PropertyGraph, q: &'q QueryGraph) -> Cow<'q, QueryGraph> {
    match q.bind(g) {
        Ok(b) if &b != q => Cow::Owned(b),
        _ => Cow::Borrowed(q),
    }
}
