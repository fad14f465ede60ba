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

//! Query-graph templates: labeled vertices and edges with property predicates.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PropertyGraph;
use crate::value::{PropertyType, PropertyValue};

pub const MAX_AUTOMORPHISM_VERTICES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "=", alias = "==")]
    Eq,
    #[serde(rename = "!=", alias = "≠", alias = "<>")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "in")]
    In,
}

impl CompareOp {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "=" | "==" => CompareOp::Eq,
            "!=" | "≠" | "<>" => CompareOp::Ne,
            "<" => CompareOp::Lt,
            "<=" | "≤" => CompareOp::Le,
            ">" => CompareOp::Gt,
            ">=" | "≥" => CompareOp::Ge,
            "in" => CompareOp::In,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::In => "in",
        }
    }

    fn is_ordering(self) -> bool {
        matches!(self, CompareOp::Lt | CompareOp::Le | CompareOp::Gt | CompareOp::Ge)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Set(Vec<PropertyValue>),
    Scalar(PropertyValue),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Predicate {
    pub prop: String,
    pub op: CompareOp,
    pub value: Operand,
}

impl Predicate {
    pub fn new(prop: impl Into<String>, op: CompareOp, value: impl Into<PropertyValue>) -> Self {
        Predicate {
            prop: prop.into(),
            op,
            value: Operand::Scalar(value.into()),
        }
    }

    fn check_shape(&self) -> Result<()> {
        match (&self.op, &self.value) {
            (CompareOp::In, Operand::Set(_)) => Ok(()),
            (CompareOp::In, Operand::Scalar(_)) => Err(Error::InvalidQuery(format!(
                "predicate on `{}`: `in` needs a list of values",
                self.prop
            ))),
            (op, Operand::Set(_)) => Err(Error::InvalidQuery(format!(
                "predicate on `{}`: `{}` needs a single value",
                self.prop,
                op.symbol()
            ))),
            (_, Operand::Scalar(PropertyValue::Null)) => Err(Error::InvalidQuery(format!(
                "predicate on `{}` compares against null",
                self.prop
            ))),
            _ => Ok(()),
        }
    }

    /// Two-valued evaluation: null or incomparable values never satisfy.
    pub fn eval(&self, v: &PropertyValue) -> bool {
        if v.is_null() {
            return false;
        }
        match &self.value {
            Operand::Set(items) => items.iter().any(|x| v.strict_eq(x).unwrap_or(false)),
            Operand::Scalar(x) => {
                let Ok(Some(ord)) = (match self.op {
                    CompareOp::Eq | CompareOp::Ne => {
                        v.strict_eq(x).map(|eq| Some(if eq { std::cmp::Ordering::Equal } else { std::cmp::Ordering::Less }))
                    }
                    _ => v.compare(x),
                }) else {
                    return false;
                };
                use std::cmp::Ordering::*;
                match self.op {
                    CompareOp::Eq => ord == Equal,
                    CompareOp::Ne => ord != Equal,
                    CompareOp::Lt => ord == Less,
                    CompareOp::Le => ord != Greater,
                    CompareOp::Gt => ord == Greater,
                    CompareOp::Ge => ord != Less,
                    CompareOp::In => false,
                }
            }
        }
    }

    /// Types literals against the declared column type and rejects
    /// incompatible operators.
    pub(crate) fn bind(&self, owner: &str, ty: PropertyType) -> Result<Predicate> {
        if self.op.is_ordering() && !ty.is_orderable() {
            return Err(Error::TypeMismatch(format!(
                "`{owner}.{}` is {ty} and does not support `{}`",
                self.prop,
                self.op.symbol()
            )));
        }
        let coerce = |v: &PropertyValue| -> Result<PropertyValue> {
            let out = match (ty, v) {
                (t, v) if v.tag() == t => v.clone(),
                (PropertyType::Float, PropertyValue::Int(i)) => PropertyValue::Float(*i as f64),
                (t, PropertyValue::Text(s)) if t != PropertyType::Text => {
                    PropertyValue::parse_typed(t, s).map_err(|m| {
                        Error::TypeMismatch(format!("`{owner}.{}`: {m}", self.prop))
                    })?
                }
                (t, v) => {
                    return Err(Error::TypeMismatch(format!(
                        "`{owner}.{}` is {t} but the predicate value is {}",
                        self.prop,
                        v.tag()
                    )))
                }
            };
            Ok(out)
        };
        let value = match &self.value {
            Operand::Scalar(v) => Operand::Scalar(coerce(v)?),
            Operand::Set(items) => Operand::Set(items.iter().map(coerce).collect::<Result<_>>()?),
        };
        Ok(Predicate {
            prop: self.prop.clone(),
            op: self.op,
            value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVertex {
    pub name: String,
    pub label: String,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEdge {
    pub src: String,
    pub dst: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicates: Vec<Predicate>,
}

#[derive(Serialize, Deserialize)]
struct QueryDoc {
    vertices: Vec<QueryVertex>,
    #[serde(default)]
    edges: Vec<QueryEdge>,
}

/// A validated query graph. Vertices keep their declaration order; edge
/// endpoints are stored as vertex positions.
#[derive(Debug, Clone)]
pub struct QueryGraph {
    vertices: Vec<QueryVertex>,
    edges: Vec<QueryEdge>,
    ends: Vec<(usize, usize)>,
    names: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl PartialEq for QueryGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl Eq for QueryGraph {}

impl Serialize for QueryGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QueryDoc {
            vertices: self.vertices.clone(),
            edges: self.edges.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QueryGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = QueryDoc::deserialize(d)?;
        QueryGraph::new(doc.vertices, doc.edges).map_err(serde::de::Error::custom)
    }
}

/// Rooted spanning forest over the query vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningForest {
    /// One root per component, components ordered by root name.
    pub roots: Vec<usize>,
    /// BFS order, component after component.
    pub order: Vec<usize>,
    /// `(parent, query edge index)` for non-root vertices.
    pub parent: Vec<Option<(usize, usize)>>,
    pub children: Vec<Vec<usize>>,
    pub component: Vec<usize>,
    pub tree_edges: Vec<usize>,
    pub non_tree_edges: Vec<usize>,
}

impl SpanningForest {
    pub fn component_count(&self) -> usize {
        self.roots.len()
    }

    /// Vertices of component `c` in BFS order.
    pub fn component_order(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied().filter(move |&u| self.component[u] == c)
    }
}

impl QueryGraph {
    pub fn new(vertices: Vec<QueryVertex>, edges: Vec<QueryEdge>) -> Result<Self> {
        let mut names = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if v.name.is_empty() {
                return Err(Error::InvalidQuery("vertex with empty name".into()));
            }
            if v.label.is_empty() {
                return Err(Error::InvalidQuery(format!("vertex `{}` has no label", v.name)));
            }
            if names.insert(v.name.clone(), i).is_some() {
                return Err(Error::InvalidQuery(format!("duplicate vertex name `{}`", v.name)));
            }
            for p in &v.predicates {
                p.check_shape()?;
            }
        }
        let mut adjacency = vec![Vec::new(); vertices.len()];
        let mut ends = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::new();
        for (e, edge) in edges.iter().enumerate() {
            let lookup = |n: &str| {
                names.get(n).copied().ok_or_else(|| {
                    Error::InvalidQuery(format!("edge references unknown vertex `{n}`"))
                })
            };
            let a = lookup(&edge.src)?;
            let b = lookup(&edge.dst)?;
            if a == b {
                return Err(Error::InvalidQuery(format!("self loop on `{}`", edge.src)));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidQuery(format!(
                    "duplicate edge between `{}` and `{}`",
                    edge.src, edge.dst
                )));
            }
            if edge.label.is_empty() {
                return Err(Error::InvalidQuery(format!(
                    "edge `{}`-`{}` has no label",
                    edge.src, edge.dst
                )));
            }
            for p in &edge.predicates {
                p.check_shape()?;
            }
            ends.push((a, b));
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
        }
        for list in &mut adjacency {
            list.sort_by(|x, y| vertices[x.0].name.cmp(&vertices[y.0].name));
        }
        Ok(QueryGraph {
            vertices,
            edges,
            ends,
            names,
            adjacency,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: QueryDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidQuery(format!("malformed query document: {e}")))?;
        QueryGraph::new(doc.vertices, doc.edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("query graphs always serialize")
    }

    pub fn empty() -> Self {
        QueryGraph::new(Vec::new(), Vec::new()).expect("empty query is valid")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[QueryVertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[QueryEdge] {
        &self.edges
    }

    pub fn vertex(&self, u: usize) -> &QueryVertex {
        &self.vertices[u]
    }

    pub fn name(&self, u: usize) -> &str {
        &self.vertices[u].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.get(name).copied()
    }

    /// Endpoint positions of edge `e`, in declaration order.
    pub fn edge_ends(&self, e: usize) -> (usize, usize) {
        self.ends[e]
    }

    /// `(neighbor, edge index)` sorted by neighbor name.
    pub fn adjacent(&self, u: usize) -> &[(usize, usize)] {
        &self.adjacency[u]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|&&(n, _)| n == b).map(|&(_, e)| e)
    }

    /// Checks labels, predicate properties and literal types against `g`, and
    /// returns a copy whose literals carry the declared property types.
    pub fn bind(&self, g: &PropertyGraph) -> Result<QueryGraph> {
        let mut vertices = self.vertices.clone();
        for v in &mut vertices {
            let schema = g.vertex_schema(&v.label).ok_or_else(|| Error::UnknownLabel {
                graph: g.name().to_string(),
                label: v.label.clone(),
            })?;
            v.predicates = v
                .predicates
                .iter()
                .map(|p| {
                    let ty = schema.get(&p.prop).ok_or_else(|| {
                        Error::InvalidQuery(format!(
                            "label `{}` has no property `{}` (vertex `{}`)",
                            v.label, p.prop, v.name
                        ))
                    })?;
                    p.bind(&v.name, *ty)
                })
                .collect::<Result<_>>()?;
        }
        let mut edges = self.edges.clone();
        for e in &mut edges {
            let schema = g.edge_schema(&e.label).ok_or_else(|| Error::UnknownLabel {
                graph: g.name().to_string(),
                label: e.label.clone(),
            })?;
            let owner = format!("{}-{}", e.src, e.dst);
            e.predicates = e
                .predicates
                .iter()
                .map(|p| {
                    let ty = schema.get(&p.prop).ok_or_else(|| {
                        Error::InvalidQuery(format!(
                            "edge label `{}` has no property `{}`",
                            e.label, p.prop
                        ))
                    })?;
                    p.bind(&owner, *ty)
                })
                .collect::<Result<_>>()?;
        }
        QueryGraph::new(vertices, edges)
    }

    /// Forest rooted at the lexicographically smallest name of each component.
    pub fn spanning_forest(&self) -> SpanningForest {
        self.spanning_forest_by(|u| self.vertices[u].name.clone())
    }

    /// Forest whose roots minimize `key` per component (ties broken by name).
    /// Children are visited in name order.
    pub fn spanning_forest_by<K: Ord>(&self, key: impl Fn(usize) -> K) -> SpanningForest {
        let n = self.vertices.len();
        let mut comp = vec![usize::MAX; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let c = members.len();
            let mut stack = vec![s];
            comp[s] = c;
            let mut list = Vec::new();
            while let Some(u) = stack.pop() {
                list.push(u);
                for &(w, _) in &self.adjacency[u] {
                    if comp[w] == usize::MAX {
                        comp[w] = c;
                        stack.push(w);
                    }
                }
            }
            members.push(list);
        }
        let mut roots: Vec<usize> = members
            .iter()
            .map(|list| {
                *list
                    .iter()
                    .min_by(|&&a, &&b| {
                        key(a)
                            .cmp(&key(b))
                            .then_with(|| self.vertices[a].name.cmp(&self.vertices[b].name))
                    })
                    .expect("components are non-empty")
            })
            .collect();
        roots.sort_by(|&a, &b| self.vertices[a].name.cmp(&self.vertices[b].name));

        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut component = vec![0; n];
        let mut order = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        let mut in_tree = vec![false; self.edges.len()];
        for (c, &r) in roots.iter().enumerate() {
            let mut queue = VecDeque::from([r]);
            visited[r] = true;
            while let Some(u) = queue.pop_front() {
                order.push(u);
                component[u] = c;
                for &(w, e) in &self.adjacency[u] {
                    if !visited[w] {
                        visited[w] = true;
                        parent[w] = Some((u, e));
                        children[u].push(w);
                        in_tree[e] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        let tree_edges = (0..self.edges.len()).filter(|&e| in_tree[e]).collect();
        let non_tree_edges = (0..self.edges.len()).filter(|&e| !in_tree[e]).collect();
        SpanningForest {
            roots,
            order,
            parent,
            children,
            component,
            tree_edges,
            non_tree_edges,
        }
    }

    /// All unordered vertex pairs `(a, b)` with `name(a) < name(b)`, sorted
    /// lexicographically by `(name(a), name(b))`.
    pub fn canonical_pairs(&self) -> Vec<(usize, usize)> {
        let mut by_name: Vec<usize> = (0..self.vertices.len()).collect();
        by_name.sort_by(|&a, &b| self.vertices[a].name.cmp(&self.vertices[b].name));
        let mut pairs = Vec::with_capacity(by_name.len() * by_name.len().saturating_sub(1) / 2);
        for (i, &a) in by_name.iter().enumerate() {
            for &b in &by_name[i + 1..] {
                pairs.push((a, b));
            }
        }
        pairs
    }

    fn predicate_signature(preds: &[Predicate]) -> Vec<Predicate> {
        let mut p = preds.to_vec();
        p.sort();
        p
    }

    /// Label-, predicate- and structure-preserving permutations, identity first.
    /// `perm[u]` is the image of vertex `u`.
    pub fn automorphisms(&self) -> Result<Vec<Vec<usize>>> {
        let n = self.vertices.len();
        if n > MAX_AUTOMORPHISM_VERTICES {
            return Err(Error::QueryTooLarge(n));
        }
        let sig: Vec<(String, Vec<Predicate>, usize)> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(u, v)| {
                (
                    v.label.clone(),
                    Self::predicate_signature(&v.predicates),
                    self.adjacency[u].len(),
                )
            })
            .collect();
        let edge_sig: Vec<(String, Vec<Predicate>)> = self
            .edges
            .iter()
            .map(|e| (e.label.clone(), Self::predicate_signature(&e.predicates)))
            .collect();

        let mut out = Vec::new();
        let mut perm = vec![usize::MAX; n];
        let mut used = vec![false; n];
        self.extend_automorphism(0, &sig, &edge_sig, &mut perm, &mut used, &mut out);
        out.sort();
        Ok(out)
    }

    fn extend_automorphism(
        &self,
        u: usize,
        sig: &[(String, Vec<Predicate>, usize)],
        edge_sig: &[(String, Vec<Predicate>)],
        perm: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let n = perm.len();
        if u == n {
            out.push(perm.clone());
            return;
        }
        for img in 0..n {
            if used[img] || sig[img] != sig[u] {
                continue;
            }
            let consistent = (0..u).all(|w| {
                match (self.edge_between(u, w), self.edge_between(img, perm[w])) {
                    (None, None) => true,
                    (Some(e1), Some(e2)) => edge_sig[e1] == edge_sig[e2],
                    _ => false,
                }
            });
            if !consistent {
                continue;
            }
            perm[u] = img;
            used[img] = true;
            self.extend_automorphism(u + 1, sig, edge_sig, perm, used, out);
            used[img] = false;
            perm[u] = usize::MAX;
        }
    }

    /// Disjoint union with `right`; right names colliding with left names
    /// get an `_r` suffix (repeated until unique).
    pub fn compose(&self, right: &QueryGraph) -> (QueryGraph, BTreeMap<String, String>) {
        let mut taken: std::collections::HashSet<String> =
            self.vertices.iter().map(|v| v.name.clone()).collect();
        let mut renames = BTreeMap::new();
        let mut vertices = self.vertices.clone();
        for v in &right.vertices {
            let mut name = v.name.clone();
            while taken.contains(&name) {
                name.push_str("_r");
            }
            taken.insert(name.clone());
            renames.insert(v.name.clone(), name.clone());
            vertices.push(QueryVertex {
                name,
                label: v.label.clone(),
                predicates: v.predicates.clone(),
            });
        }
        let mut edges = self.edges.clone();
        for e in &right.edges {
            edges.push(QueryEdge {
                src: renames[&e.src].clone(),
                dst: renames[&e.dst].clone(),
                label: e.label.clone(),
                predicates: e.predicates.clone(),
            });
        }
        let q = QueryGraph::new(vertices, edges).expect("disjoint union of valid queries is valid");
        (q, renames)
    }
}
