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

//! Hypergraphs of matchings: schema, topology, Source assembly and the
//! canonical text serialization.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PropertyGraph;
use crate::matcher::{enumerate_matches, sample_matches, ExactConfig, Matching, SampleConfig};
use crate::query::QueryGraph;
use crate::value::PropertyValue;

pub const FORMAT_VERSION: u32 = 1;
const SEPARATOR: &str = "---";

/// Edge presence over all canonical query-vertex pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topology(Vec<u64>);

impl Topology {
    pub fn with_pairs(pairs: usize) -> Self {
        Topology(vec![0; pairs.div_ceil(64)])
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    /// `0`/`1` per pair in canonical order.
    pub fn bit_string(&self, pairs: usize) -> String {
        (0..pairs).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }

    pub fn parse_bits(s: &str) -> Option<Self> {
        let mut t = Topology::with_pairs(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => t.set(i),
                '0' => {}
                _ => return None,
            }
        }
        Some(t)
    }

    /// Pattern name for two- and three-vertex hyperedges, else the bit string.
    pub fn name(&self, vertices: usize) -> String {
        let pairs = vertices * vertices.saturating_sub(1) / 2;
        match (vertices, self.count_ones()) {
            (3, 3) => "Triangle".into(),
            (3, 2) => "2-path".into(),
            (3, _) => "Disconnected".into(),
            (2, 1) => "Edge".into(),
            (2, _) => "Disconnected".into(),
            _ => self.bit_string(pairs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hyperedge {
    /// Dense vertex per query vertex, in the slot graph of that vertex.
    pub matching: Matching,
    pub topology: Topology,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergraphSchema {
    pub vertex_columns: Vec<String>,
    pub edge_columns: Vec<(String, String)>,
    pub hyperedge_columns: Vec<String>,
}

impl HypergraphSchema {
    pub fn of(q: &QueryGraph) -> Self {
        HypergraphSchema {
            vertex_columns: q.vertices().iter().map(|v| v.name.clone()).collect(),
            edge_columns: q
                .edges()
                .iter()
                .map(|e| (e.src.clone(), e.dst.clone()))
                .collect(),
            hyperedge_columns: vec!["topology".into()],
        }
    }

    pub fn column_count(&self) -> usize {
        self.vertex_columns.len() + self.edge_columns.len() + self.hyperedge_columns.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Provenance {
    Source {
        graph: String,
        mode: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        trials: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        seed: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none", default, with = "wide_opt")]
        tree_weight: Option<u128>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        accepted: Option<u64>,
        estimated_total: f64,
        exact: bool,
        dedup: bool,
    },
    Join {
        mode: String,
        condition: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        r: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        seed: Option<u64>,
        #[serde(with = "wide")]
        join_weight: u128,
        exact: bool,
    },
    Dedup {
        removed: usize,
    },
}

// 128-bit weights travel as decimal strings.
mod wide {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod wide_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u128>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_str(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u128>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// A multiset of hyperedges over a (possibly composed) query graph.
///
/// Each query vertex lives in one of `graphs`; vertices of different query
/// vertices are never identified with each other, even when they map to the
/// same physical vertex.
#[derive(Debug, Clone)]
pub struct Hypergraph {
    query: QueryGraph,
    graphs: Vec<Arc<PropertyGraph>>,
    slots: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    pub hyperedges: Vec<Hyperedge>,
    pub scale_factor: f64,
    pub provenance: Provenance,
}

impl PartialEq for Hypergraph {
    fn eq(&self, other: &Self) -> bool {
        self.query == other.query
            && self.graph_names() == other.graph_names()
            && self.slots == other.slots
            && self.hyperedges == other.hyperedges
            && self.scale_factor.to_bits() == other.scale_factor.to_bits()
            && self.provenance == other.provenance
    }
}

/// A column addressable on a hypergraph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ColumnRef {
    /// Vertex property; `id` is the external vertex id.
    Vertex { vertex: usize, prop: String },
    /// Edge property between two query vertices, or the edge label when `prop` is absent.
    Edge { a: usize, b: usize, prop: Option<String> },
    Topology,
}

impl Hypergraph {
    pub fn new(
        query: QueryGraph,
        graphs: Vec<Arc<PropertyGraph>>,
        slots: Vec<usize>,
        hyperedges: Vec<Hyperedge>,
        scale_factor: f64,
        provenance: Provenance,
    ) -> Self {
        assert_eq!(slots.len(), query.vertex_count());
        let pairs = query.canonical_pairs();
        Hypergraph {
            query,
            graphs,
            slots,
            pairs,
            hyperedges,
            scale_factor,
            provenance,
        }
    }

    pub fn query(&self) -> &QueryGraph {
        &self.query
    }

    pub fn graphs(&self) -> &[Arc<PropertyGraph>] {
        &self.graphs
    }

    pub fn graph_names(&self) -> Vec<&str> {
        self.graphs.iter().map(|g| g.name()).collect()
    }

    /// Index into [`Self::graphs`] for each query vertex.
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn graph_of(&self, vertex: usize) -> &PropertyGraph {
        &self.graphs[self.slots[vertex]]
    }

    pub fn canonical_pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn schema(&self) -> HypergraphSchema {
        HypergraphSchema::of(&self.query)
    }

    pub fn len(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyperedges.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.scale_factor == 1.0
    }

    /// Recomputes the topology of `matching` against the underlying graphs.
    pub fn compute_topology(&self, matching: &[u32]) -> Topology {
        compute_topology(&self.graphs, &self.slots, &self.pairs, matching)
    }

    pub fn resolve_column(&self, column: &str) -> Result<ColumnRef> {
        let unknown = || Error::UnknownColumn(column.to_string());
        if column == "topology" {
            return Ok(ColumnRef::Topology);
        }
        let (head, prop) = match column.split_once('.') {
            Some((h, p)) if !p.is_empty() => (h, Some(p)),
            Some(_) => return Err(unknown()),
            None => (column, None),
        };
        if let Some(v) = self.query.index_of(head) {
            let prop = prop.unwrap_or("id");
            let label = &self.query.vertex(v).label;
            let known = prop == "id"
                || self
                    .graph_of(v)
                    .vertex_schema(label)
                    .is_some_and(|s| s.contains_key(prop));
            if !known {
                return Err(unknown());
            }
            return Ok(ColumnRef::Vertex {
                vertex: v,
                prop: prop.to_string(),
            });
        }
        // Edge columns are `a-b`; vertex names may themselves contain dashes.
        for (i, _) in head.match_indices('-') {
            let (a, b) = (&head[..i], &head[i + 1..]);
            if let (Some(a), Some(b)) = (self.query.index_of(a), self.query.index_of(b)) {
                if a != b {
                    if let Some(p) = prop {
                        if !self.edge_prop_known(a, b, p) {
                            return Err(unknown());
                        }
                    }
                    return Ok(ColumnRef::Edge {
                        a,
                        b,
                        prop: prop.map(str::to_string),
                    });
                }
            }
        }
        Err(unknown())
    }

    /// Whether `p` can be an edge property between query vertices `a` and `b`:
    /// declared on the query edge's label, or on any edge label for non-edges.
    fn edge_prop_known(&self, a: usize, b: usize, p: &str) -> bool {
        if self.slots[a] != self.slots[b] {
            return true;
        }
        let g = self.graph_of(a);
        match self.query.edge_between(a, b) {
            Some(e) => g
                .edge_schema(&self.query.edges()[e].label)
                .is_some_and(|s| s.contains_key(p)),
            None => (0..g.edge_count() as u32).any(|e| {
                g.edge_schema(g.label_name(g.edge(e).label))
                    .is_some_and(|s| s.contains_key(p))
            }),
        }
    }

    pub fn column_value(&self, h: &Hyperedge, column: &ColumnRef) -> PropertyValue {
        match column {
            ColumnRef::Vertex { vertex, prop } => self
                .graph_of(*vertex)
                .vertex_prop(h.matching[*vertex], prop)
                .clone(),
            ColumnRef::Edge { a, b, prop } => {
                if self.slots[*a] != self.slots[*b] {
                    return PropertyValue::Null;
                }
                let g = self.graph_of(*a);
                let (va, vb) = (h.matching[*a], h.matching[*b]);
                if va == vb {
                    return PropertyValue::Null;
                }
                match g.edge_between(va, vb) {
                    None => PropertyValue::Null,
                    Some(e) => match prop {
                        Some(p) => g.edge_prop(e, p).clone(),
                        None => PropertyValue::Text(g.label_name(g.edge(e).label).to_string()),
                    },
                }
            }
            ColumnRef::Topology => PropertyValue::Text(h.topology.name(self.query.vertex_count())),
        }
    }

    /// External id of query vertex `u` in hyperedge `h`.
    pub fn vertex_id(&self, h: &Hyperedge, u: usize) -> i64 {
        self.graph_of(u).vertex_id(h.matching[u])
    }

    /// Canonical text form: one JSON envelope line, a separator line, then a
    /// CSV block of external vertex ids and topology bits per hyperedge.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    pub fn write_canonical(&self, out: &mut String) {
        let envelope = Envelope {
            format: FORMAT_VERSION,
            query: self.query.clone(),
            graphs: self.graph_names().into_iter().map(str::to_string).collect(),
            vertex_graphs: self.slots.clone(),
            scale_factor: self.scale_factor,
            provenance: self.provenance.clone(),
            rows: self.hyperedges.len(),
        };
        out.push_str(&serde_json::to_string(&envelope).expect("envelope serializes"));
        out.push('\n');
        out.push_str(SEPARATOR);
        out.push('\n');
        let mut header: Vec<&str> = self.query.vertices().iter().map(|v| v.name.as_str()).collect();
        header.push("topology");
        out.push_str(&header.join(","));
        out.push('\n');
        let pairs = self.pairs.len();
        for h in &self.hyperedges {
            for u in 0..self.query.vertex_count() {
                let _ = write!(out, "{},", self.vertex_id(h, u));
            }
            out.push_str(&h.topology.bit_string(pairs));
            out.push('\n');
        }
    }

    /// Parses the canonical form, resolving graph names through `registry`.
    pub fn from_canonical(
        text: &str,
        registry: &dyn Fn(&str) -> Result<Arc<PropertyGraph>>,
    ) -> Result<Hypergraph> {
        let (envelope, body) = Self::split_canonical(text)?;
        let graphs = envelope
            .graphs
            .iter()
            .map(|n| registry(n))
            .collect::<Result<Vec<_>>>()?;
        let n = envelope.query.vertex_count();
        if envelope.vertex_graphs.len() != n || envelope.vertex_graphs.iter().any(|&s| s >= graphs.len()) {
            return Err(Error::Serde("vertex graph slots do not match the query".into()));
        }
        let pairs = envelope.query.canonical_pairs();
        let mut lines = body.lines();
        lines.next();
        let mut hyperedges = Vec::with_capacity(envelope.rows);
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 1 {
                return Err(Error::Serde(format!("row {} has {} cells, expected {}", i + 1, cells.len(), n + 1)));
            }
            let mut matching = Vec::with_capacity(n);
            for u in 0..n {
                let id: i64 = cells[u]
                    .parse()
                    .map_err(|_| Error::Serde(format!("row {}: bad vertex id `{}`", i + 1, cells[u])))?;
                let g = &graphs[envelope.vertex_graphs[u]];
                let idx = g.vertex_index(id).ok_or_else(|| Error::UnknownVertex {
                    graph: g.name().to_string(),
                    id,
                })?;
                matching.push(idx);
            }
            let topology = Topology::parse_bits(cells[n])
                .filter(|_| cells[n].len() == pairs.len())
                .ok_or_else(|| Error::Serde(format!("row {}: bad topology `{}`", i + 1, cells[n])))?;
            hyperedges.push(Hyperedge { matching, topology });
        }
        if hyperedges.len() != envelope.rows {
            return Err(Error::Serde(format!(
                "expected {} rows, found {}",
                envelope.rows,
                hyperedges.len()
            )));
        }
        Ok(Hypergraph::new(
            envelope.query,
            graphs,
            envelope.vertex_graphs,
            hyperedges,
            envelope.scale_factor,
            envelope.provenance,
        ))
    }

    /// Graph names referenced by a canonical document, without reading rows.
    pub fn canonical_graph_names(text: &str) -> Result<Vec<String>> {
        Ok(Self::split_canonical(text)?.0.graphs)
    }

    fn split_canonical(text: &str) -> Result<(Envelope, &str)> {
        let (head, rest) = text
            .split_once('\n')
            .ok_or_else(|| Error::Serde("missing hypergraph envelope".into()))?;
        let envelope: Envelope = serde_json::from_str(head)?;
        if envelope.format != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: envelope.format,
                expected: FORMAT_VERSION,
            });
        }
        let body = rest
            .strip_prefix(SEPARATOR)
            .and_then(|r| r.strip_prefix('\n'))
            .ok_or_else(|| Error::Serde("missing row separator".into()))?;
        Ok((envelope, body))
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: u32,
    query: QueryGraph,
    graphs: Vec<String>,
    vertex_graphs: Vec<usize>,
    scale_factor: f64,
    provenance: Provenance,
    rows: usize,
}

pub(crate) fn compute_topology(
    graphs: &[Arc<PropertyGraph>],
    slots: &[usize],
    pairs: &[(usize, usize)],
    matching: &[u32],
) -> Topology {
    let mut t = Topology::with_pairs(pairs.len());
    for (i, &(a, b)) in pairs.iter().enumerate() {
        if slots[a] != slots[b] || matching[a] == matching[b] {
            continue;
        }
        if graphs[slots[a]].edge_between(matching[a], matching[b]).is_some() {
            t.set(i);
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SourceMode {
    Exact,
    Sampled { trials: u64 },
}

#[derive(Debug, Clone)]
pub struct SourceOptions {
    pub mode: SourceMode,
    /// Required for sampled sources.
    pub seed: Option<u64>,
    /// Keep one matching per automorphism orbit (exact sources only).
    pub dedup_automorphic: bool,
    pub exact: ExactConfig,
}

impl SourceOptions {
    pub fn exact() -> Self {
        SourceOptions {
            mode: SourceMode::Exact,
            seed: None,
            dedup_automorphic: false,
            exact: ExactConfig::default(),
        }
    }

    pub fn sampled(trials: u64, seed: u64) -> Self {
        SourceOptions {
            mode: SourceMode::Sampled { trials },
            seed: Some(seed),
            dedup_automorphic: false,
            exact: ExactConfig::default(),
        }
    }
}

fn with_topology(
    graphs: &[Arc<PropertyGraph>],
    slots: &[usize],
    pairs: &[(usize, usize)],
    matches: Vec<Matching>,
) -> Vec<Hyperedge> {
    matches
        .into_par_iter()
        .map(|m| Hyperedge {
            topology: compute_topology(graphs, slots, pairs, &m),
            matching: m,
        })
        .collect()
}

/// Matches `q` into `g` and assembles one hyperedge per matching.
pub fn source(g: Arc<PropertyGraph>, q: &QueryGraph, opts: &SourceOptions) -> Result<Hypergraph> {
    if q.vertex_count() == 0 {
        return Err(Error::InvalidQuery("query has no vertices".into()));
    }
    let bound = q.bind(&g)?;
    let graphs = vec![g];
    let slots = vec![0; bound.vertex_count()];
    let pairs = bound.canonical_pairs();
    let graph = graphs[0].name().to_string();

    let (matches, scale_factor, provenance) = match opts.mode {
        SourceMode::Exact => {
            let set = enumerate_matches(&graphs[0], &bound, &opts.exact)?;
            let n = set.matches.len();
            (
                set.matches,
                1.0,
                Provenance::Source {
                    graph,
                    mode: "exact".into(),
                    trials: None,
                    seed: None,
                    tree_weight: None,
                    accepted: None,
                    estimated_total: n as f64,
                    exact: true,
                    dedup: opts.dedup_automorphic,
                },
            )
        }
        SourceMode::Sampled { trials } => {
            let seed = opts.seed.ok_or_else(|| {
                Error::InvalidArgument("sampled source requires a seed".into())
            })?;
            let r = sample_matches(&graphs[0], &bound, &SampleConfig::new(trials, seed))?;
            if opts.dedup_automorphic && !r.exact {
                return Err(Error::InvalidArgument(
                    "automorphism dedup applies to exact hypergraphs only".into(),
                ));
            }
            (
                r.matches,
                r.scale_factor,
                Provenance::Source {
                    graph,
                    mode: "sampled".into(),
                    trials: Some(trials),
                    seed: Some(seed),
                    tree_weight: Some(r.tree_weight),
                    accepted: Some(r.accepted),
                    estimated_total: r.estimated_total,
                    exact: r.exact,
                    dedup: opts.dedup_automorphic,
                },
            )
        }
    };
    let hyperedges = with_topology(&graphs, &slots, &pairs, matches);
    let h = Hypergraph::new(bound, graphs, slots, hyperedges, scale_factor, provenance);
    if opts.dedup_automorphic {
        let mut d = dedup_rows(&h)?;
        d.provenance = h.provenance;
        return Ok(d);
    }
    Ok(h)
}

fn dedup_rows(h: &Hypergraph) -> Result<Hypergraph> {
    if !h.is_exact() {
        return Err(Error::InvalidArgument(
            "automorphism dedup applies to exact hypergraphs only".into(),
        ));
    }
    let auts: Vec<Vec<usize>> = h
        .query
        .automorphisms()?
        .into_iter()
        .filter(|p| p.iter().enumerate().all(|(u, &img)| h.slots[u] == h.slots[img]))
        .collect();
    let n = h.query.vertex_count();
    let mut seen = std::collections::HashSet::new();
    let mut kept = Vec::new();
    let mut image = vec![0u32; n];
    for e in &h.hyperedges {
        let mut is_min = true;
        for p in &auts {
            for u in 0..n {
                image[p[u]] = e.matching[u];
            }
            if image < e.matching {
                is_min = false;
                break;
            }
        }
        if is_min && seen.insert(e.matching.clone()) {
            kept.push(e.clone());
        }
    }
    let removed = h.len() - kept.len();
    Ok(Hypergraph::new(
        h.query.clone(),
        h.graphs.clone(),
        h.slots.clone(),
        kept,
        1.0,
        Provenance::Dedup { removed },
    ))
}

/// Keeps one hyperedge per automorphism orbit, the lexicographically smallest.
pub fn dedup(h: &Hypergraph) -> Result<Hypergraph> {
    dedup_rows(h)
}

/// Registry closure over a name map, for [`Hypergraph::from_canonical`].
pub fn registry_of(
    graphs: &HashMap<String, Arc<PropertyGraph>>,
) -> impl Fn(&str) -> Result<Arc<PropertyGraph>> + '_ {
    move |name| {
        graphs
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownGraph(name.to_string()))
    }
}
