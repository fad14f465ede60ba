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

//! Joins of hypergraphs on vertex-property equality: the complete hash join
//! and the group-sample join.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PropertyGraph;
use crate::hypergraph::{compute_topology, ColumnRef, Hyperedge, Hypergraph, Provenance};
use crate::rng::stream_rng;
use crate::value::{PropertyType, PropertyValue};

const DRAWS_PER_STREAM: u64 = 4096;

/// One equality `left_vertex.left_prop = right_vertex.right_prop`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JoinPair {
    pub left_vertex: String,
    pub left_prop: String,
    pub right_vertex: String,
    pub right_prop: String,
}

impl fmt::Display for JoinPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}={}.{}",
            self.left_vertex, self.left_prop, self.right_vertex, self.right_prop
        )
    }
}

fn split_column(s: &str) -> Result<(String, String)> {
    match s.trim().split_once('.') {
        Some((v, p)) if !v.is_empty() && !p.is_empty() => Ok((v.to_string(), p.to_string())),
        _ => Err(Error::InvalidJoin(format!("`{s}` is not of the form vertex.property"))),
    }
}

#[derive(Serialize, Deserialize)]
struct PairDoc {
    left: String,
    right: String,
}

impl Serialize for JoinPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PairDoc {
            left: format!("{}.{}", self.left_vertex, self.left_prop),
            right: format!("{}.{}", self.right_vertex, self.right_prop),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for JoinPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = PairDoc::deserialize(d)?;
        let (lv, lp) = split_column(&doc.left).map_err(serde::de::Error::custom)?;
        let (rv, rp) = split_column(&doc.right).map_err(serde::de::Error::custom)?;
        Ok(JoinPair {
            left_vertex: lv,
            left_prop: lp,
            right_vertex: rv,
            right_prop: rp,
        })
    }
}

/// Conjunction of vertex-property equalities; empty means Cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JoinCondition {
    pub pairs: Vec<JoinPair>,
}

impl JoinCondition {
    pub fn new(pairs: Vec<JoinPair>) -> Self {
        JoinCondition { pairs }
    }

    /// Parses `l.p=r.q;l2.p2=r2.q2`. An empty string is the empty condition.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (l, r) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidJoin(format!("`{part}` has no `=`")))?;
            let (lv, lp) = split_column(l)?;
            let (rv, rp) = split_column(r)?;
            pairs.push(JoinPair {
                left_vertex: lv,
                left_prop: lp,
                right_vertex: rv,
                right_prop: rp,
            });
        }
        Ok(JoinCondition { pairs })
    }

    pub fn describe(&self) -> Vec<String> {
        self.pairs.iter().map(ToString::to_string).collect()
    }
}

type Key = Vec<PropertyValue>;

fn declared_type(h: &Hypergraph, vertex: usize, prop: &str) -> Option<PropertyType> {
    if prop == "id" {
        return Some(PropertyType::Int);
    }
    let label = &h.query().vertex(vertex).label;
    h.graph_of(vertex).vertex_schema(label)?.get(prop).copied()
}

/// Condition columns resolved on both inputs.
struct Resolved {
    left: Vec<ColumnRef>,
    right: Vec<ColumnRef>,
}

fn resolve(left: &Hypergraph, right: &Hypergraph, cond: &JoinCondition) -> Result<Resolved> {
    let mut l = Vec::new();
    let mut r = Vec::new();
    for p in &cond.pairs {
        let lv = left.query().index_of(&p.left_vertex).ok_or_else(|| {
            Error::InvalidJoin(format!("left input has no vertex `{}`", p.left_vertex))
        })?;
        let rv = right.query().index_of(&p.right_vertex).ok_or_else(|| {
            Error::InvalidJoin(format!("right input has no vertex `{}`", p.right_vertex))
        })?;
        let lt = declared_type(left, lv, &p.left_prop).ok_or_else(|| {
            Error::InvalidJoin(format!("`{}.{}` is not a known property", p.left_vertex, p.left_prop))
        })?;
        let rt = declared_type(right, rv, &p.right_prop).ok_or_else(|| {
            Error::InvalidJoin(format!("`{}.{}` is not a known property", p.right_vertex, p.right_prop))
        })?;
        if lt != rt {
            return Err(Error::TypeMismatch(format!(
                "join key `{}.{}` is {lt} but `{}.{}` is {rt}",
                p.left_vertex, p.left_prop, p.right_vertex, p.right_prop
            )));
        }
        l.push(ColumnRef::Vertex {
            vertex: lv,
            prop: p.left_prop.clone(),
        });
        r.push(ColumnRef::Vertex {
            vertex: rv,
            prop: p.right_prop.clone(),
        });
    }
    Ok(Resolved { left: l, right: r })
}

/// Composite key of a hyperedge; `None` if any component is null.
fn key_of(h: &Hypergraph, e: &Hyperedge, cols: &[ColumnRef]) -> Option<Key> {
    let mut key = Vec::with_capacity(cols.len());
    for c in cols {
        let v = h.column_value(e, c);
        if v.is_null() {
            return None;
        }
        key.push(v);
    }
    Some(key)
}

/// Right-side partners per left hyperedge.
#[derive(Debug, Clone)]
pub struct JoinWeightIndex {
    cartesian: bool,
    right_len: usize,
    /// Bucket per left hyperedge, if it has partners.
    left_bucket: Vec<Option<u32>>,
    buckets: Vec<Vec<u32>>,
    /// Number of joinable right hyperedges per left hyperedge.
    pub weights: Vec<u64>,
    pub total: u128,
}

impl JoinWeightIndex {
    pub fn weight(&self, left: usize) -> u64 {
        self.weights[left]
    }

    /// The `k`-th joinable right hyperedge of `left`, in stored order.
    pub fn partner(&self, left: usize, k: usize) -> usize {
        if self.cartesian {
            return k;
        }
        let b = self.left_bucket[left].expect("partner requested for weightless row");
        self.buckets[b as usize][k] as usize
    }

    pub fn right_len(&self) -> usize {
        self.right_len
    }
}

pub fn build_join_weights(
    left: &Hypergraph,
    right: &Hypergraph,
    cond: &JoinCondition,
) -> Result<JoinWeightIndex> {
    let res = resolve(left, right, cond)?;
    if cond.pairs.is_empty() {
        let w = right.len() as u64;
        return Ok(JoinWeightIndex {
            cartesian: true,
            right_len: right.len(),
            left_bucket: Vec::new(),
            buckets: Vec::new(),
            weights: vec![w; left.len()],
            total: w as u128 * left.len() as u128,
        });
    }
    let mut slot_of: HashMap<Key, u32> = HashMap::new();
    let mut buckets: Vec<Vec<u32>> = Vec::new();
    for (j, e) in right.hyperedges.iter().enumerate() {
        if let Some(k) = key_of(right, e, &res.right) {
            let b = *slot_of.entry(k).or_insert_with(|| {
                buckets.push(Vec::new());
                (buckets.len() - 1) as u32
            });
            buckets[b as usize].push(j as u32);
        }
    }
    let left_bucket: Vec<Option<u32>> = left
        .hyperedges
        .par_iter()
        .map(|e| key_of(left, e, &res.left).and_then(|k| slot_of.get(&k).copied()))
        .collect();
    let weights: Vec<u64> = left_bucket
        .iter()
        .map(|b| b.map_or(0, |b| buckets[b as usize].len() as u64))
        .collect();
    let total = weights.iter().map(|&w| w as u128).sum();
    Ok(JoinWeightIndex {
        cartesian: false,
        right_len: right.len(),
        left_bucket,
        buckets,
        weights,
        total,
    })
}

/// Layout of a joined hypergraph: composed query and graph slots.
struct Composition {
    query: crate::query::QueryGraph,
    graphs: Vec<Arc<PropertyGraph>>,
    slots: Vec<usize>,
    pairs: Vec<(usize, usize)>,
}

fn compose(left: &Hypergraph, right: &Hypergraph) -> Composition {
    let (query, _) = left.query().compose(right.query());
    let mut graphs: Vec<Arc<PropertyGraph>> = left.graphs().to_vec();
    let mut remap = Vec::with_capacity(right.graphs().len());
    for g in right.graphs() {
        match graphs.iter().position(|x| x.name() == g.name()) {
            Some(i) => remap.push(i),
            None => {
                graphs.push(g.clone());
                remap.push(graphs.len() - 1);
            }
        }
    }
    let mut slots = left.slots().to_vec();
    slots.extend(right.slots().iter().map(|&s| remap[s]));
    let pairs = query.canonical_pairs();
    Composition {
        query,
        graphs,
        slots,
        pairs,
    }
}

fn merge(c: &Composition, l: &Hyperedge, r: &Hyperedge) -> Hyperedge {
    let mut matching = Vec::with_capacity(l.matching.len() + r.matching.len());
    matching.extend_from_slice(&l.matching);
    matching.extend_from_slice(&r.matching);
    Hyperedge {
        topology: compute_topology(&c.graphs, &c.slots, &c.pairs, &matching),
        matching,
    }
}

fn complete_rows(
    c: &Composition,
    left: &Hypergraph,
    right: &Hypergraph,
    idx: &JoinWeightIndex,
) -> Vec<Hyperedge> {
    (0..left.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let l = &left.hyperedges[i];
            (0..idx.weight(i) as usize).map(move |k| merge(c, l, &right.hyperedges[idx.partner(i, k)]))
        })
        .collect()
}

/// All pairs of hyperedges satisfying `cond`, merged.
pub fn join_complete(left: &Hypergraph, right: &Hypergraph, cond: &JoinCondition) -> Result<Hypergraph> {
    let idx = build_join_weights(left, right, cond)?;
    let c = compose(left, right);
    let rows = complete_rows(&c, left, right, &idx);
    Ok(Hypergraph::new(
        c.query,
        c.graphs,
        c.slots,
        rows,
        left.scale_factor * right.scale_factor,
        Provenance::Join {
            mode: "exact".into(),
            condition: cond.describe(),
            r: None,
            seed: None,
            join_weight: idx.total,
            exact: true,
        },
    ))
}

/// Group-sample join: `r` draws, each a left hyperedge with probability
/// proportional to its weight and then a uniform partner, so every joined
/// pair is drawn with probability `1 / W`.
pub fn join_group_sample(
    left: &Hypergraph,
    right: &Hypergraph,
    cond: &JoinCondition,
    r: u64,
    seed: u64,
) -> Result<Hypergraph> {
    if r == 0 {
        return Err(Error::InvalidArgument("join sample size must be at least 1".into()));
    }
    let idx = build_join_weights(left, right, cond)?;
    let c = compose(left, right);
    let base = left.scale_factor * right.scale_factor;
    let w = idx.total;
    let provenance = |exact: bool| Provenance::Join {
        mode: "sampled".into(),
        condition: cond.describe(),
        r: Some(r),
        seed: Some(seed),
        join_weight: w,
        exact,
    };
    if w <= r as u128 {
        let rows = complete_rows(&c, left, right, &idx);
        return Ok(Hypergraph::new(c.query, c.graphs, c.slots, rows, base, provenance(true)));
    }

    let mut cumulative = Vec::with_capacity(idx.weights.len());
    let mut acc: u128 = 0;
    for &x in &idx.weights {
        acc += x as u128;
        cumulative.push(acc);
    }
    let streams = r.div_ceil(DRAWS_PER_STREAM);
    let rows: Vec<Hyperedge> = (0..streams)
        .into_par_iter()
        .flat_map_iter(|s| {
            let draws = DRAWS_PER_STREAM.min(r - s * DRAWS_PER_STREAM);
            let mut rng = stream_rng(seed, s);
            let mut out = Vec::with_capacity(draws as usize);
            for _ in 0..draws {
                let x = rng.gen_range(0..w);
                let i = cumulative.partition_point(|&cv| cv <= x);
                let k = rng.gen_range(0..idx.weight(i)) as usize;
                out.push(merge(&c, &left.hyperedges[i], &right.hyperedges[idx.partner(i, k)]));
            }
            out
        })
        .collect();
    let scale = w as f64 / r as f64 * base;
    Ok(Hypergraph::new(c.query, c.graphs, c.slots, rows, scale, provenance(false)))
}
