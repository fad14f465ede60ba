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

//! In-memory property graphs: CSV ingestion, label and adjacency indexes.
//!
//! Vertices are stored densely, ordered by their external id, so a dense
//! index order coincides with id order. Edges are undirected and the graph is
//! simple: at most one edge per unordered vertex pair.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{PropertyType, PropertyValue};

/// Graph-local vertex identifier as it appears in input files.
pub type VertexId = i64;
pub type LabelId = u32;
pub type PropertyMap = BTreeMap<String, PropertyValue>;

static NULL: PropertyValue = PropertyValue::Null;

/// Files a graph was loaded from; recorded so sessions can reload it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFiles {
    pub vertex_files: Vec<PathBuf>,
    pub edge_files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EdgeRecord {
    pub a: u32,
    pub b: u32,
    pub label: LabelId,
    pub props: PropertyMap,
}

/// Either a vertex or an (unordered) edge, addressed by external ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementRef {
    Vertex(VertexId),
    Edge(VertexId, VertexId),
}

#[derive(Debug)]
pub struct PropertyGraph {
    name: String,
    labels: Vec<String>,
    label_lookup: HashMap<String, LabelId>,
    ids: Vec<VertexId>,
    id_lookup: HashMap<VertexId, u32>,
    vertex_labels: Vec<LabelId>,
    vertex_props: Vec<PropertyMap>,
    by_label: Vec<Vec<u32>>,
    adjacency: Vec<Vec<(u32, u32)>>,
    edges: Vec<EdgeRecord>,
    vertex_schema: BTreeMap<String, BTreeMap<String, PropertyType>>,
    edge_schema: BTreeMap<String, BTreeMap<String, PropertyType>>,
    files: GraphFiles,
}

impl PropertyGraph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn files(&self) -> &GraphFiles {
        &self.files
    }

    pub fn vertex_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_index(&self, id: VertexId) -> Option<u32> {
        self.id_lookup.get(&id).copied()
    }

    pub fn vertex_id(&self, idx: u32) -> VertexId {
        self.ids[idx as usize]
    }

    pub fn label_id(&self, label: &str) -> Option<LabelId> {
        self.label_lookup.get(label).copied()
    }

    pub fn label_name(&self, label: LabelId) -> &str {
        &self.labels[label as usize]
    }

    pub fn vertex_label(&self, idx: u32) -> LabelId {
        self.vertex_labels[idx as usize]
    }

    /// Sorted dense indexes of all vertices carrying `label`.
    pub fn vertices_with_label(&self, label: LabelId) -> &[u32] {
        self.by_label
            .get(label as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn vertex_labels(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.vertex_schema
            .keys()
            .map(move |l| (l.as_str(), self.vertices_with_label(self.label_lookup[l]).len()))
    }

    pub fn vertex_schema(&self, label: &str) -> Option<&BTreeMap<String, PropertyType>> {
        self.vertex_schema.get(label)
    }

    pub fn edge_schema(&self, label: &str) -> Option<&BTreeMap<String, PropertyType>> {
        self.edge_schema.get(label)
    }

    pub fn is_vertex_label(&self, label: &str) -> bool {
        self.vertex_schema.contains_key(label)
    }

    pub fn is_edge_label(&self, label: &str) -> bool {
        self.edge_schema.contains_key(label)
    }

    pub fn vertex_props(&self, idx: u32) -> &PropertyMap {
        &self.vertex_props[idx as usize]
    }

    /// Property of a vertex by dense index; null when absent. The external id
    /// is always available as the `id` property.
    pub fn vertex_prop(&self, idx: u32, prop: &str) -> &PropertyValue {
        self.vertex_props[idx as usize].get(prop).unwrap_or(&NULL)
    }

    pub fn degree(&self, idx: u32) -> usize {
        self.adjacency[idx as usize].len()
    }

    /// `(neighbor, edge index)` pairs sorted by neighbor.
    pub fn adjacent(&self, idx: u32) -> &[(u32, u32)] {
        &self.adjacency[idx as usize]
    }

    pub fn edge(&self, edge: u32) -> &EdgeRecord {
        &self.edges[edge as usize]
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    /// Edge index between two dense vertices, if adjacent.
    #[inline]
    pub fn edge_between(&self, a: u32, b: u32) -> Option<u32> {
        let (probe, target) = if self.adjacency[a as usize].len() <= self.adjacency[b as usize].len()
        {
            (a, b)
        } else {
            (b, a)
        };
        let list = &self.adjacency[probe as usize];
        list.binary_search_by_key(&target, |&(n, _)| n)
            .ok()
            .map(|pos| list[pos].1)
    }

    pub fn edge_prop(&self, edge: u32, prop: &str) -> &PropertyValue {
        self.edges[edge as usize].props.get(prop).unwrap_or(&NULL)
    }

    fn require(&self, id: VertexId) -> Result<u32> {
        self.vertex_index(id).ok_or_else(|| Error::UnknownVertex {
            graph: self.name.clone(),
            id,
        })
    }

    /// Label of the edge between `a` and `b`, if any. Symmetric in its arguments.
    pub fn has_edge(&self, a: VertexId, b: VertexId) -> Result<Option<&str>> {
        if a == b {
            return Err(Error::InvalidArgument(format!(
                "has_edge requires two distinct vertices, got {a} twice"
            )));
        }
        let ia = self.require(a)?;
        let ib = self.require(b)?;
        Ok(self
            .edge_between(ia, ib)
            .map(|e| self.label_name(self.edges[e as usize].label)))
    }

    /// Neighbors of `v` sorted by id, optionally filtered by edge and vertex label.
    pub fn neighbors(
        &self,
        v: VertexId,
        edge_label: Option<&str>,
        vertex_label: Option<&str>,
    ) -> Result<Vec<(VertexId, &str)>> {
        let idx = self.require(v)?;
        let edge_label = match edge_label {
            Some(l) => match self.label_id(l) {
                Some(id) => Some(id),
                None => return Ok(Vec::new()),
            },
            None => None,
        };
        let vertex_label = match vertex_label {
            Some(l) => match self.label_id(l) {
                Some(id) => Some(id),
                None => return Ok(Vec::new()),
            },
            None => None,
        };
        Ok(self.adjacency[idx as usize]
            .iter()
            .filter(|&&(n, e)| {
                edge_label.is_none_or(|l| self.edges[e as usize].label == l)
                    && vertex_label.is_none_or(|l| self.vertex_labels[n as usize] == l)
            })
            .map(|&(n, e)| (self.ids[n as usize], self.label_name(self.edges[e as usize].label)))
            .collect())
    }

    /// Stored property value, or null if the target lacks the property.
    pub fn get_property(&self, target: ElementRef, prop: &str) -> Result<PropertyValue> {
        match target {
            ElementRef::Vertex(v) => {
                let idx = self.require(v)?;
                Ok(self.vertex_prop(idx, prop).clone())
            }
            ElementRef::Edge(a, b) => {
                let ia = self.require(a)?;
                let ib = self.require(b)?;
                let e = self.edge_between(ia, ib).ok_or_else(|| Error::UnknownEdge {
                    graph: self.name.clone(),
                    a,
                    b,
                })?;
                Ok(self.edge_prop(e, prop).clone())
            }
        }
    }
}

/// Incremental construction of a [`PropertyGraph`]; used by the CSV loader
/// and by generators that build graphs directly.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    name: String,
    vertices: Vec<(VertexId, String, PropertyMap)>,
    edges: Vec<(VertexId, VertexId, String, PropertyMap)>,
    vertex_schema: BTreeMap<String, BTreeMap<String, PropertyType>>,
    edge_schema: BTreeMap<String, BTreeMap<String, PropertyType>>,
    files: GraphFiles,
}

fn record_schema(
    schema: &mut BTreeMap<String, BTreeMap<String, PropertyType>>,
    label: &str,
    props: &PropertyMap,
) -> Result<()> {
    let cols = schema.entry(label.to_string()).or_default();
    for (k, v) in props {
        if v.is_null() {
            continue;
        }
        match cols.get(k) {
            Some(&t) if t != v.tag() => {
                return Err(Error::TypeMismatch(format!(
                    "property `{k}` of label `{label}` holds both {t} and {} values",
                    v.tag()
                )))
            }
            Some(_) => {}
            None => {
                cols.insert(k.clone(), v.tag());
            }
        }
    }
    Ok(())
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        GraphBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Declares the columns of a vertex label up front (CSV headers do this).
    pub fn declare_vertex_label(&mut self, label: &str, columns: &[(String, PropertyType)]) -> Result<()> {
        let cols = self.vertex_schema.entry(label.to_string()).or_default();
        for (name, ty) in columns {
            if let Some(&t) = cols.get(name) {
                if t != *ty {
                    return Err(Error::TypeMismatch(format!(
                        "property `{name}` of label `{label}` declared as both {t} and {ty}"
                    )));
                }
            }
            cols.insert(name.clone(), *ty);
        }
        Ok(())
    }

    pub fn declare_edge_label(&mut self, label: &str, columns: &[(String, PropertyType)]) -> Result<()> {
        let cols = self.edge_schema.entry(label.to_string()).or_default();
        for (name, ty) in columns {
            if let Some(&t) = cols.get(name) {
                if t != *ty {
                    return Err(Error::TypeMismatch(format!(
                        "property `{name}` of edge label `{label}` declared as both {t} and {ty}"
                    )));
                }
            }
            cols.insert(name.clone(), *ty);
        }
        Ok(())
    }

    pub fn add_vertex(&mut self, id: VertexId, label: &str, mut props: PropertyMap) -> Result<()> {
        props.insert("id".to_string(), PropertyValue::Int(id));
        record_schema(&mut self.vertex_schema, label, &props)?;
        self.vertices.push((id, label.to_string(), props));
        Ok(())
    }

    pub fn add_edge(&mut self, a: VertexId, b: VertexId, label: &str, props: PropertyMap) -> Result<()> {
        record_schema(&mut self.edge_schema, label, &props)?;
        self.edges.push((a, b, label.to_string(), props));
        Ok(())
    }

    pub fn with_files(mut self, files: GraphFiles) -> Self {
        self.files = files;
        self
    }

    pub fn build(self) -> Result<PropertyGraph> {
        let GraphBuilder {
            name,
            mut vertices,
            edges,
            vertex_schema,
            edge_schema,
            files,
        } = self;

        let mut labels: Vec<String> = Vec::new();
        let mut label_lookup: HashMap<String, LabelId> = HashMap::new();
        let mut intern = |l: &str| -> LabelId {
            if let Some(&id) = label_lookup.get(l) {
                return id;
            }
            let id = labels.len() as LabelId;
            labels.push(l.to_string());
            label_lookup.insert(l.to_string(), id);
            id
        };
        for l in vertex_schema.keys().chain(edge_schema.keys()) {
            intern(l);
        }

        vertices.sort_by_key(|v| v.0);
        let mut ids = Vec::with_capacity(vertices.len());
        let mut id_lookup = HashMap::with_capacity(vertices.len());
        let mut vertex_labels = Vec::with_capacity(vertices.len());
        let mut vertex_props = Vec::with_capacity(vertices.len());
        for (idx, (id, label, props)) in vertices.into_iter().enumerate() {
            if id_lookup.insert(id, idx as u32).is_some() {
                return Err(Error::DuplicateVertex { graph: name, id });
            }
            ids.push(id);
            vertex_labels.push(intern(&label));
            vertex_props.push(props);
        }

        let mut adjacency: Vec<Vec<(u32, u32)>> = vec![Vec::new(); ids.len()];
        let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(edges.len());
        let mut records = Vec::with_capacity(edges.len());
        for (src, dst, label, props) in edges {
            let lookup = |v: VertexId| {
                id_lookup.get(&v).copied().ok_or(Error::MissingVertex {
                    graph: name.clone(),
                    src,
                    dst,
                    missing: v,
                })
            };
            let a = lookup(src)?;
            let b = lookup(dst)?;
            if a == b {
                return Err(Error::SelfLoop { graph: name, id: src });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::DuplicateEdge {
                    graph: name,
                    a: src,
                    b: dst,
                });
            }
            let e = records.len() as u32;
            adjacency[a as usize].push((b, e));
            adjacency[b as usize].push((a, e));
            records.push(EdgeRecord {
                a,
                b,
                label: intern(&label),
                props,
            });
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let mut by_label = vec![Vec::new(); labels.len()];
        for (idx, &l) in vertex_labels.iter().enumerate() {
            by_label[l as usize].push(idx as u32);
        }

        Ok(PropertyGraph {
            name,
            labels,
            label_lookup,
            ids,
            id_lookup,
            vertex_labels,
            vertex_props,
            by_label,
            adjacency,
            edges: records,
            vertex_schema,
            edge_schema,
            files,
        })
    }
}

/// One parsed CSV input: its `#label=` metadata, typed header and rows.
struct LabeledCsv {
    label: String,
    columns: Vec<(String, PropertyType)>,
    rows: Vec<(usize, Vec<PropertyValue>)>,
}

fn read_labeled_csv(path: &Path) -> Result<LabeledCsv> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let shown = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: shown.clone(),
        line,
        message,
    };

    let mut label = None;
    let mut offset = 0usize;
    let mut consumed = 0usize;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            offset += 1;
            consumed += line.len();
            continue;
        }
        if let Some(meta) = trimmed.strip_prefix('#') {
            if let Some(l) = meta.trim().strip_prefix("label=") {
                label = Some(l.trim().to_string());
            }
            offset += 1;
            consumed += line.len();
            continue;
        }
        break;
    }
    let label = label.ok_or_else(|| parse_err(1, "missing `#label=<Label>` metadata line".into()))?;
    if label.is_empty() {
        return Err(parse_err(1, "empty label".into()));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text[consumed..].as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(offset + 1, e.to_string()))?
        .clone();
    let mut columns = Vec::with_capacity(headers.len());
    for cell in headers.iter() {
        let (name, ty) = cell
            .split_once(':')
            .ok_or_else(|| parse_err(offset + 1, format!("header cell `{cell}` is not `name:type`")))?;
        let ty = PropertyType::parse(ty)
            .ok_or_else(|| parse_err(offset + 1, format!("unknown type `{ty}` in header")))?;
        columns.push((name.trim().to_string(), ty));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0) + offset;
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0) + offset;
        if record.len() != columns.len() {
            return Err(parse_err(
                line,
                format!("expected {} cells, found {}", columns.len(), record.len()),
            ));
        }
        let mut values = Vec::with_capacity(columns.len());
        for ((name, ty), raw) in columns.iter().zip(record.iter()) {
            let v = PropertyValue::parse_typed(*ty, raw)
                .map_err(|m| parse_err(line, format!("column `{name}`: {m}")))?;
            values.push(v);
        }
        rows.push((line, values));
    }
    Ok(LabeledCsv {
        label,
        columns,
        rows,
    })
}

/// Loads a graph from one CSV file per vertex label and one per edge label.
///
/// Vertex files start with an `id:int` column, edge files with `src:int,dst:int`.
pub fn load_graph(name: &str, files: &GraphFiles) -> Result<PropertyGraph> {
    let mut builder = GraphBuilder::new(name).with_files(files.clone());
    let mut vertex_rows: HashMap<VertexId, (String, usize)> = HashMap::new();

    for path in &files.vertex_files {
        let csv = read_labeled_csv(path)?;
        let shown = path.display().to_string();
        match csv.columns.first() {
            Some((n, PropertyType::Int)) if n == "id" => {}
            _ => {
                return Err(Error::Parse {
                    path: shown,
                    line: 1,
                    message: "vertex files must start with an `id:int` column".into(),
                })
            }
        }
        builder.declare_vertex_label(&csv.label, &csv.columns)?;
        for (line, values) in csv.rows {
            let id = match values[0] {
                PropertyValue::Int(i) => i,
                _ => {
                    return Err(Error::Parse {
                        path: shown,
                        line,
                        message: "vertex id must not be empty".into(),
                    })
                }
            };
            if let Some((prev_path, prev_line)) = vertex_rows.get(&id) {
                return Err(Error::Parse {
                    path: shown,
                    line,
                    message: format!(
                        "duplicate vertex id {id} (first defined at {prev_path}:{prev_line})"
                    ),
                });
            }
            vertex_rows.insert(id, (shown.clone(), line));
            let props: PropertyMap = csv.columns[1..]
                .iter()
                .zip(values.into_iter().skip(1))
                .filter(|(_, v)| !v.is_null())
                .map(|((n, _), v)| (n.clone(), v))
                .collect();
            builder.add_vertex(id, &csv.label, props)?;
        }
    }

    let mut pairs: HashMap<(VertexId, VertexId), (String, usize)> = HashMap::new();
    for path in &files.edge_files {
        let csv = read_labeled_csv(path)?;
        let shown = path.display().to_string();
        let ok = csv.columns.len() >= 2
            && csv.columns[0] == ("src".to_string(), PropertyType::Int)
            && csv.columns[1] == ("dst".to_string(), PropertyType::Int);
        if !ok {
            return Err(Error::Parse {
                path: shown,
                line: 1,
                message: "edge files must start with `src:int,dst:int` columns".into(),
            });
        }
        builder.declare_edge_label(&csv.label, &csv.columns[2..])?;
        for (line, values) in csv.rows {
            let (src, dst) = match (&values[0], &values[1]) {
                (PropertyValue::Int(a), PropertyValue::Int(b)) => (*a, *b),
                _ => {
                    return Err(Error::Parse {
                        path: shown,
                        line,
                        message: "edge endpoints must not be empty".into(),
                    })
                }
            };
            for v in [src, dst] {
                if !vertex_rows.contains_key(&v) {
                    return Err(Error::Parse {
                        path: shown,
                        line,
                        message: format!("edge ({src}, {dst}) references missing vertex {v}"),
                    });
                }
            }
            if src == dst {
                return Err(Error::Parse {
                    path: shown,
                    line,
                    message: format!("self loop on vertex {src}"),
                });
            }
            let key = (src.min(dst), src.max(dst));
            if let Some((prev_path, prev_line)) = pairs.get(&key) {
                return Err(Error::Parse {
                    path: shown,
                    line,
                    message: format!(
                        "duplicate edge between {src} and {dst} (first defined at {prev_path}:{prev_line})"
                    ),
                });
            }
            pairs.insert(key, (shown.clone(), line));
            let props: PropertyMap = csv.columns[2..]
                .iter()
                .zip(values.into_iter().skip(2))
                .filter(|(_, v)| !v.is_null())
                .map(|((n, _), v)| (n.clone(), v))
                .collect();
            builder.add_edge(src, dst, &csv.label, props)?;
        }
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PropertyGraph {
        let mut b = GraphBuilder::new("g");
        for id in [3, 1, 2, 9] {
            let mut p = PropertyMap::new();
            p.insert("w".into(), PropertyValue::Int(id * 10));
            b.add_vertex(id, if id < 3 { "A" } else { "B" }, p).unwrap();
        }
        b.add_edge(1, 2, "x", PropertyMap::new()).unwrap();
        b.add_edge(3, 1, "y", PropertyMap::new()).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn dense_order_follows_ids() {
        let g = small();
        assert_eq!((0..4).map(|i| g.vertex_id(i)).collect::<Vec<_>>(), vec![1, 2, 3, 9]);
        assert_eq!(g.vertex_prop(2, "w"), &PropertyValue::Int(30));
        assert_eq!(g.vertex_prop(2, "id"), &PropertyValue::Int(3));
    }

    #[test]
    fn has_edge_is_symmetric() {
        let g = small();
        assert_eq!(g.has_edge(1, 2).unwrap(), Some("x"));
        assert_eq!(g.has_edge(2, 1).unwrap(), Some("x"));
        assert_eq!(g.has_edge(2, 3).unwrap(), None);
        assert!(g.has_edge(1, 1).is_err());
        assert!(matches!(g.has_edge(1, 77), Err(Error::UnknownVertex { .. })));
    }

    #[test]
    fn neighbors_filtered_and_sorted() {
        let g = small();
        assert_eq!(g.neighbors(1, None, None).unwrap(), vec![(2, "x"), (3, "y")]);
        assert_eq!(g.neighbors(1, Some("y"), None).unwrap(), vec![(3, "y")]);
        assert_eq!(g.neighbors(1, None, Some("A")).unwrap(), vec![(2, "x")]);
        assert!(g.neighbors(9, None, None).unwrap().is_empty());
        assert!(g.neighbors(1, Some("nope"), None).unwrap().is_empty());
    }

    #[test]
    fn builder_rejects_bad_edges() {
        let mut b = GraphBuilder::new("g");
        b.add_vertex(1, "A", PropertyMap::new()).unwrap();
        b.add_vertex(2, "A", PropertyMap::new()).unwrap();
        b.add_edge(1, 2, "x", PropertyMap::new()).unwrap();
        b.add_edge(2, 1, "z", PropertyMap::new()).unwrap();
        assert!(matches!(b.build(), Err(Error::DuplicateEdge { .. })));

        let mut b = GraphBuilder::new("g");
        b.add_vertex(1, "A", PropertyMap::new()).unwrap();
        b.add_edge(1, 5, "x", PropertyMap::new()).unwrap();
        assert!(matches!(b.build(), Err(Error::MissingVertex { missing: 5, .. })));

        let mut b = GraphBuilder::new("g");
        b.add_vertex(1, "A", PropertyMap::new()).unwrap();
        b.add_vertex(1, "B", PropertyMap::new()).unwrap();
        assert!(matches!(b.build(), Err(Error::DuplicateVertex { id: 1, .. })));
    }

    #[test]
    fn missing_property_is_null() {
        let g = small();
        assert!(g
            .get_property(ElementRef::Vertex(1), "nope")
            .unwrap()
            .is_null());
        assert!(g
            .get_property(ElementRef::Edge(2, 1), "nope")
            .unwrap()
            .is_null());
        assert!(g.get_property(ElementRef::Edge(2, 9), "nope").is_err());
    }
}
