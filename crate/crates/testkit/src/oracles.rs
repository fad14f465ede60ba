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

//! Brute-force reference implementations.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use hyperbi_core::query::Operand;
use hyperbi_core::{CompareOp, PropertyGraph, PropertyValue, QueryGraph};

/// Literal compared against a stored value, coerced the way a reader of the
/// CSV would expect: text dates become dates, integers widen to floats.
fn coerce(stored: &PropertyValue, lit: &PropertyValue) -> PropertyValue {
    match (stored, lit) {
        (PropertyValue::Date(_), PropertyValue::Text(s)) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(PropertyValue::Date)
            .unwrap_or_else(|_| lit.clone()),
        (PropertyValue::Float(_), PropertyValue::Int(i)) => PropertyValue::Float(*i as f64),
        _ => lit.clone(),
    }
}

fn cmp_same(a: &PropertyValue, b: &PropertyValue) -> Option<Ordering> {
    use PropertyValue::*;
    match (a, b) {
        (Int(x), Int(y)) => Some(x.cmp(y)),
        (Float(x), Float(y)) => x.partial_cmp(y),
        (Int(x), Float(y)) => (*x as f64).partial_cmp(y),
        (Float(x), Int(y)) => x.partial_cmp(&(*y as f64)),
        (Text(x), Text(y)) => Some(x.cmp(y)),
        (Bool(x), Bool(y)) => Some(x.cmp(y)),
        (Date(x), Date(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

pub fn predicate_holds(v: &PropertyValue, op: CompareOp, operand: &Operand) -> bool {
    if v.is_null() {
        return false;
    }
    match (op, operand) {
        (CompareOp::In, Operand::Set(items)) => items
            .iter()
            .any(|i| cmp_same(v, &coerce(v, i)) == Some(Ordering::Equal)),
        (CompareOp::In, Operand::Scalar(_)) | (_, Operand::Set(_)) => false,
        (op, Operand::Scalar(lit)) => {
            let Some(o) = cmp_same(v, &coerce(v, lit)) else {
                return false;
            };
            match op {
                CompareOp::Eq => o == Ordering::Equal,
                CompareOp::Ne => o != Ordering::Equal,
                CompareOp::Lt => o == Ordering::Less,
                CompareOp::Le => o != Ordering::Greater,
                CompareOp::Gt => o == Ordering::Greater,
                CompareOp::Ge => o != Ordering::Less,
                CompareOp::In => unreachable!(),
            }
        }
    }
}

/// Dense adjacency: `adj[a][b]` is the edge index between a and b.
pub struct DenseGraph {
    pub n: usize,
    pub labels: Vec<String>,
    adj: Vec<Option<u32>>,
}

impl DenseGraph {
    pub fn of(g: &PropertyGraph) -> Self {
        let n = g.vertex_count();
        let labels = (0..n as u32)
            .map(|v| g.label_name(g.vertex_label(v)).to_string())
            .collect();
        let mut adj = vec![None; n * n];
        for (i, e) in g.edges().iter().enumerate() {
            adj[e.a as usize * n + e.b as usize] = Some(i as u32);
            adj[e.b as usize * n + e.a as usize] = Some(i as u32);
        }
        DenseGraph { n, labels, adj }
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<u32> {
        self.adj[a * self.n + b]
    }
}

/// Label and predicate scan for every query vertex.
pub fn oracle_candidates(g: &PropertyGraph, q: &QueryGraph) -> Vec<Vec<u32>> {
    q.vertices()
        .iter()
        .map(|qv| {
            (0..g.vertex_count() as u32)
                .filter(|&v| g.label_name(g.vertex_label(v)) == qv.label)
                .filter(|&v| {
                    qv.predicates
                        .iter()
                        .all(|p| predicate_holds(g.vertex_prop(v, &p.prop), p.op, &p.value))
                })
                .collect()
        })
        .collect()
}

fn edge_fits(g: &PropertyGraph, d: &DenseGraph, q: &QueryGraph, qe: usize, a: usize, b: usize) -> bool {
    let Some(e) = d.edge(a, b) else {
        return false;
    };
    let want = &q.edges()[qe];
    g.label_name(g.edge(e).label) == want.label
        && want
            .predicates
            .iter()
            .all(|p| predicate_holds(g.edge_prop(e, &p.prop), p.op, &p.value))
}

fn query_edge_index(q: &QueryGraph) -> BTreeMap<(usize, usize), usize> {
    let mut m = BTreeMap::new();
    for (i, e) in q.edges().iter().enumerate() {
        let a = q.index_of(&e.src).expect("edge endpoint");
        let b = q.index_of(&e.dst).expect("edge endpoint");
        m.insert((a.min(b), a.max(b)), i);
    }
    m
}

/// Every injective assignment satisfying labels, predicates, query edges and
/// induced non-edges; dense vertex indexes, sorted.
pub fn brute_force_matches(g: &PropertyGraph, q: &QueryGraph) -> Vec<Vec<u32>> {
    let d = DenseGraph::of(g);
    let cands = oracle_candidates(g, q);
    let qedges = query_edge_index(q);
    let k = q.vertex_count();
    let mut out = Vec::new();
    let mut cur: Vec<u32> = Vec::with_capacity(k);
    fn rec(
        g: &PropertyGraph,
        d: &DenseGraph,
        q: &QueryGraph,
        cands: &[Vec<u32>],
        qedges: &BTreeMap<(usize, usize), usize>,
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        let u = cur.len();
        if u == cands.len() {
            out.push(cur.clone());
            return;
        }
        'next: for &v in &cands[u] {
            for (w, &x) in cur.iter().enumerate() {
                if x == v {
                    continue 'next;
                }
                let ok = match qedges.get(&(w, u)) {
                    Some(&qe) => edge_fits(g, d, q, qe, x as usize, v as usize),
                    None => d.edge(x as usize, v as usize).is_none(),
                };
                if !ok {
                    continue 'next;
                }
            }
            cur.push(v);
            rec(g, d, q, cands, qedges, cur, out);
            cur.pop();
        }
    }
    rec(g, &d, q, &cands, &qedges, &mut cur, &mut out);
    out.sort();
    out
}

/// Number of assignments `u -> candidates[u]` (repeats allowed) under which
/// every listed query edge maps onto a fitting graph edge.
pub fn brute_force_tree_embeddings(
    g: &PropertyGraph,
    q: &QueryGraph,
    candidates: &[Vec<u32>],
    tree_edges: &[usize],
) -> u128 {
    let d = DenseGraph::of(g);
    let ends: Vec<(usize, usize)> = tree_edges
        .iter()
        .map(|&e| {
            let qe = &q.edges()[e];
            (q.index_of(&qe.src).unwrap(), q.index_of(&qe.dst).unwrap())
        })
        .collect();
    let mut cur = vec![0u32; candidates.len()];
    fn rec(
        u: usize,
        g: &PropertyGraph,
        d: &DenseGraph,
        q: &QueryGraph,
        candidates: &[Vec<u32>],
        tree_edges: &[usize],
        ends: &[(usize, usize)],
        cur: &mut Vec<u32>,
    ) -> u128 {
        if u == candidates.len() {
            return 1;
        }
        let mut total = 0;
        'next: for &v in &candidates[u] {
            cur[u] = v;
            for (i, &(a, b)) in ends.iter().enumerate() {
                if a.max(b) != u {
                    continue;
                }
                let (x, y) = (cur[a] as usize, cur[b] as usize);
                if x == y || !edge_fits(g, d, q, tree_edges[i], x, y) {
                    continue 'next;
                }
            }
            total += rec(u + 1, g, d, q, candidates, tree_edges, ends, cur);
        }
        total
    }
    rec(0, g, &d, q, candidates, tree_edges, &ends, &mut cur)
}

/// Unlabeled triangles, each counted once, by the i < j < k triple loop.
pub fn triangle_count(g: &PropertyGraph) -> u64 {
    let n = g.vertex_count();
    let words = n.div_ceil(64);
    let mut bits = vec![0u64; n * words];
    for e in g.edges() {
        let (a, b) = (e.a as usize, e.b as usize);
        bits[a * words + b / 64] |= 1 << (b % 64);
        bits[b * words + a / 64] |= 1 << (a % 64);
    }
    let has = |a: usize, b: usize| bits[a * words + b / 64] >> (b % 64) & 1 == 1;
    let mut count = 0;
    for i in 0..n {
        for j in i + 1..n {
            if !has(i, j) {
                continue;
            }
            for k in j + 1..n {
                if has(i, k) && has(j, k) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Nested-loop equi-join of two row sets; `keys` pairs a left column with a
/// right column. Nulls never match. Output rows are left then right cells.
pub fn oracle_join(
    left: &[Vec<PropertyValue>],
    right: &[Vec<PropertyValue>],
    keys: &[(usize, usize)],
) -> Vec<Vec<PropertyValue>> {
    let mut out = Vec::new();
    for l in left {
        for r in right {
            let hit = keys.iter().all(|&(a, b)| {
                !l[a].is_null() && !r[b].is_null() && cmp_same(&l[a], &r[b]) == Some(Ordering::Equal)
            });
            if hit {
                let mut row = l.clone();
                row.extend(r.iter().cloned());
                out.push(row);
            }
        }
    }
    out
}

/// Row counts per distinct key tuple.
pub fn hand_group_count<R: AsRef<[String]>>(rows: &[R], key: &[usize]) -> BTreeMap<Vec<String>, u64> {
    let mut m = BTreeMap::new();
    for r in rows {
        let r = r.as_ref();
        *m.entry(key.iter().map(|&k| r[k].clone()).collect()).or_insert(0) += 1;
    }
    m
}

/// Sum of a numeric column per distinct key tuple; empty cells are skipped.
pub fn hand_group_sum<R: AsRef<[String]>>(rows: &[R], key: &[usize], col: usize) -> BTreeMap<Vec<String>, f64> {
    let mut m = BTreeMap::new();
    for r in rows {
        let r = r.as_ref();
        let e = m.entry(key.iter().map(|&k| r[k].clone()).collect()).or_insert(0.0);
        if let Ok(x) = r[col].parse::<f64>() {
            *e += x;
        }
    }
    m
}

/// A fixture CSV read without the engine loader: column names (type
/// suffixes stripped) and raw cells.
pub fn read_raw_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r
        .headers()
        .expect("header row")
        .iter()
        .map(|h| h.split(':').next().unwrap_or(h).to_string())
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.expect("csv row").iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}
