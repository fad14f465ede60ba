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

//! Relational projection of hypergraphs: one row per hyperedge.

use serde::Serialize;

use crate::error::Result;
use crate::hypergraph::{ColumnRef, Hypergraph};
use crate::value::PropertyValue;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<PropertyValue>>,
    pub scale_factor: f64,
    /// Hyperedges in the source hypergraph, before pagination.
    pub total_rows: usize,
}

/// Vertex ids of every query vertex followed by `topology`.
pub fn default_columns(h: &Hypergraph) -> Vec<String> {
    let mut cols: Vec<String> = h.query().vertices().iter().map(|v| v.name.clone()).collect();
    cols.push("topology".into());
    cols
}

/// Every vertex property, every query edge label and property, and `topology`.
pub fn full_columns(h: &Hypergraph) -> Vec<String> {
    let q = h.query();
    let mut cols = Vec::new();
    for (u, v) in q.vertices().iter().enumerate() {
        cols.push(format!("{}.id", v.name));
        if let Some(schema) = h.graph_of(u).vertex_schema(&v.label) {
            cols.extend(schema.keys().filter(|k| *k != "id").map(|k| format!("{}.{k}", v.name)));
        }
    }
    for e in q.edges() {
        cols.push(format!("{}-{}", e.src, e.dst));
        let a = q.index_of(&e.src).expect("edge endpoints exist");
        if let Some(schema) = h.graph_of(a).edge_schema(&e.label) {
            cols.extend(schema.keys().map(|k| format!("{}-{}.{k}", e.src, e.dst)));
        }
    }
    cols.push("topology".into());
    cols
}

/// Projects `h` onto `columns` (default: vertex ids and topology).
pub fn project_view(h: &Hypergraph, columns: Option<&[String]>) -> Result<ViewTable> {
    project_page(h, columns, 0, usize::MAX)
}

/// Like [`project_view`] but materializes only rows `offset..offset + limit`.
pub fn project_page(
    h: &Hypergraph,
    columns: Option<&[String]>,
    offset: usize,
    limit: usize,
) -> Result<ViewTable> {
    let columns = match columns {
        Some(c) if !c.is_empty() => c.to_vec(),
        _ => default_columns(h),
    };
    let refs: Vec<ColumnRef> = columns
        .iter()
        .map(|c| h.resolve_column(c))
        .collect::<Result<_>>()?;
    let rows = h
        .hyperedges
        .iter()
        .skip(offset)
        .take(limit)
        .map(|e| refs.iter().map(|c| h.column_value(e, c)).collect())
        .collect();
    Ok(ViewTable {
        columns,
        rows,
        scale_factor: h.scale_factor,
        total_rows: h.len(),
    })
}

impl ViewTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(ToString::to_string))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}
