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

//! Grouped aggregation over hypergraph views with scale-corrected estimators,
//! and the cube operators that rewrite analysis specs.

use std::collections::BTreeMap;

use chrono::Datelike;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tdigest::TDigest;

use crate::error::{Error, Result};
use crate::hypergraph::{ColumnRef, Hypergraph};
use crate::query::{CompareOp, Operand, Predicate};
use crate::rng::stream_rng;
use crate::value::{PropertyType, PropertyValue};

pub const DEFAULT_TDIGEST_DELTA: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFn {
    Count,
    Sum,
    Max,
    Min,
    DistinctCount,
    Quantile,
}

impl AggFn {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "count" => AggFn::Count,
            "sum" => AggFn::Sum,
            "max" => AggFn::Max,
            "min" => AggFn::Min,
            "distinct_count" | "count_distinct" | "distinct" => AggFn::DistinctCount,
            "quantile" => AggFn::Quantile,
            _ => return None,
        })
    }

    fn keyword(self) -> &'static str {
        match self {
            AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Max => "max",
            AggFn::Min => "min",
            AggFn::DistinctCount => "distinct_count",
            AggFn::Quantile => "quantile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "fn")]
    pub func: AggFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Aggregate {
    pub fn count() -> Self {
        Aggregate {
            func: AggFn::Count,
            column: None,
            q: None,
            name: None,
        }
    }

    pub fn of(func: AggFn, column: &str) -> Self {
        Aggregate {
            func,
            column: Some(column.to_string()),
            q: None,
            name: None,
        }
    }

    pub fn quantile(column: &str, q: f64) -> Self {
        Aggregate {
            q: Some(q),
            ..Aggregate::of(AggFn::Quantile, column)
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn output_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (&self.column, self.q) {
            (None, _) => self.func.keyword().to_string(),
            (Some(c), Some(q)) => format!("{}({c},{q})", self.func.keyword()),
            (Some(c), None) => format!("{}({c})", self.func.keyword()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub op: CompareOp,
    pub value: Operand,
}

impl Filter {
    pub fn eq(column: &str, value: impl Into<PropertyValue>) -> Self {
        Filter {
            column: column.to_string(),
            op: CompareOp::Eq,
            value: Operand::Scalar(value.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

/// Group-by dimensions, row filters and aggregates. Dimensions may carry a
/// date bucket suffix, `col:year` or `col:month`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub group: Vec<String>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub aggregates: Vec<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<Bootstrap>,
}

impl AnalysisSpec {
    pub fn drill_down(&self, dim: &str) -> Result<Self> {
        if self.group.iter().any(|d| d == dim) {
            return Err(Error::InvalidAnalysis(format!("`{dim}` is already a grouping dimension")));
        }
        let mut s = self.clone();
        s.group.push(dim.to_string());
        Ok(s)
    }

    pub fn roll_up(&self, dim: &str) -> Result<Self> {
        let pos = self
            .group
            .iter()
            .position(|d| d == dim)
            .ok_or_else(|| Error::InvalidAnalysis(format!("`{dim}` is not a grouping dimension")))?;
        let mut s = self.clone();
        s.group.remove(pos);
        Ok(s)
    }

    pub fn slice(&self, dim: &str, value: impl Into<PropertyValue>) -> Self {
        self.dice(vec![Filter::eq(dim, value)])
    }

    pub fn dice(&self, filters: Vec<Filter>) -> Self {
        let mut s = self.clone();
        s.filters.extend(filters);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "HT")]
    HorvitzThompson,
    #[serde(rename = "GEE")]
    Gee,
    #[serde(rename = "t-digest")]
    TDigest,
    #[serde(rename = "sample-extreme")]
    SampleExtreme,
}

impl EstimatorKind {
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::HorvitzThompson => "HT",
            EstimatorKind::Gee => "GEE",
            EstimatorKind::TDigest => "t-digest",
            EstimatorKind::SampleExtreme => "sample-extreme",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub name: String,
    pub value: PropertyValue,
    pub estimator: EstimatorKind,
    pub se: Option<f64>,
    /// Set for sample extremes of a sampled hypergraph.
    pub caveat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub key: Vec<PropertyValue>,
    pub values: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub group_by: Vec<String>,
    pub aggregates: Vec<String>,
    pub scale_factor: f64,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// Group columns, then `name`, `name_estimator`, `name_se` per aggregate.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.group_by.clone();
        for a in &self.aggregates {
            header.push(a.clone());
            header.push(format!("{a}_estimator"));
            header.push(format!("{a}_se"));
        }
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec: Vec<String> = row.key.iter().map(ToString::to_string).collect();
            for e in &row.values {
                rec.push(e.value.to_string());
                rec.push(e.estimator.tag().to_string());
                rec.push(e.se.map(|s| s.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result tables serialize")
    }

    /// The estimate named `aggregate` in the row whose key renders as `key`.
    pub fn lookup(&self, key: &[&str], aggregate: &str) -> Option<&Estimate> {
        let col = self.aggregates.iter().position(|a| a == aggregate)?;
        self.rows
            .iter()
            .find(|r| r.key.iter().map(ToString::to_string).eq(key.iter().map(|k| k.to_string())))
            .map(|r| &r.values[col])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    pub tdigest_delta: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            tdigest_delta: DEFAULT_TDIGEST_DELTA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bucket {
    Year,
    Month,
}

#[derive(Debug, Clone)]
struct Dim {
    col: ColumnRef,
    bucket: Option<Bucket>,
}

impl Dim {
    fn value(&self, h: &Hypergraph, row: usize) -> PropertyValue {
        let v = h.column_value(&h.hyperedges[row], &self.col);
        match (self.bucket, v) {
            (None, v) => v,
            (Some(Bucket::Year), PropertyValue::Date(d)) => PropertyValue::Int(d.year() as i64),
            (Some(Bucket::Month), PropertyValue::Date(d)) => {
                PropertyValue::Text(d.format("%Y-%m").to_string())
            }
            (Some(_), _) => PropertyValue::Null,
        }
    }
}

/// Declared type of a column, when the underlying schema records one.
pub fn column_type(h: &Hypergraph, c: &ColumnRef) -> Option<PropertyType> {
    match c {
        ColumnRef::Vertex { vertex, prop } => {
            if prop == "id" {
                return Some(PropertyType::Int);
            }
            let label = &h.query().vertex(*vertex).label;
            h.graph_of(*vertex).vertex_schema(label)?.get(prop).copied()
        }
        ColumnRef::Edge { prop: None, .. } | ColumnRef::Topology => Some(PropertyType::Text),
        ColumnRef::Edge { a, b, prop: Some(p) } => {
            let e = h.query().edge_between(*a, *b)?;
            let label = &h.query().edges()[e].label;
            h.graph_of(*a).edge_schema(label)?.get(p).copied()
        }
    }
}

fn resolve_dim(h: &Hypergraph, text: &str) -> Result<(Dim, Option<PropertyType>)> {
    let (col, bucket) = match text.rsplit_once(':') {
        Some((c, "year")) => (c, Some(Bucket::Year)),
        Some((c, "month")) => (c, Some(Bucket::Month)),
        Some((_, b)) => return Err(Error::InvalidAnalysis(format!("unknown bucket `{b}` in `{text}`"))),
        None => (text, None),
    };
    let col = h.resolve_column(col)?;
    let ty = column_type(h, &col);
    let ty = match bucket {
        None => ty,
        Some(b) => {
            if ty.is_some_and(|t| t != PropertyType::Date) {
                return Err(Error::TypeMismatch(format!("`{text}` buckets a non-date column")));
            }
            Some(if b == Bucket::Year { PropertyType::Int } else { PropertyType::Text })
        }
    };
    Ok((Dim { col, bucket }, ty))
}

struct Measure {
    func: AggFn,
    dim: Option<Dim>,
    q: f64,
    name: String,
}

/// Validated, resolved form of a spec against one hypergraph.
struct Plan {
    dims: Vec<Dim>,
    filters: Vec<(Dim, Predicate)>,
    measures: Vec<Measure>,
}

fn plan(h: &Hypergraph, spec: &AnalysisSpec) -> Result<Plan> {
    let mut dims = Vec::new();
    for (i, g) in spec.group.iter().enumerate() {
        if spec.group[..i].contains(g) {
            return Err(Error::InvalidAnalysis(format!("duplicate grouping dimension `{g}`")));
        }
        dims.push(resolve_dim(h, g)?.0);
    }
    let mut filters = Vec::new();
    for f in &spec.filters {
        let (dim, ty) = resolve_dim(h, &f.column)?;
        let pred = Predicate {
            prop: f.column.clone(),
            op: f.op,
            value: f.value.clone(),
        };
        let pred = match ty {
            Some(t) => pred.bind("filter", t)?,
            None => pred,
        };
        filters.push((dim, pred));
    }
    let mut measures = Vec::new();
    for a in &spec.aggregates {
        let name = a.output_name();
        if measures.iter().any(|m: &Measure| m.name == name) {
            return Err(Error::InvalidAnalysis(format!("duplicate aggregate name `{name}`")));
        }
        let (dim, ty) = match (a.func, &a.column) {
            (AggFn::Count, _) => (None, None),
            (_, None) => {
                return Err(Error::InvalidAnalysis(format!("`{name}` needs a column")));
            }
            (_, Some(c)) => {
                let (d, t) = resolve_dim(h, c)?;
                (Some(d), t)
            }
        };
        if let Some(t) = ty {
            let ok = match a.func {
                AggFn::Sum | AggFn::Quantile => t.is_numeric(),
                AggFn::Max | AggFn::Min => t.is_orderable(),
                AggFn::Count | AggFn::DistinctCount => true,
            };
            if !ok {
                return Err(Error::TypeMismatch(format!(
                    "{} is not defined on {t} column `{}`",
                    a.func.keyword(),
                    a.column.as_deref().unwrap_or_default()
                )));
            }
        }
        let q = match a.func {
            AggFn::Quantile => {
                let q = a.q.ok_or_else(|| Error::InvalidAnalysis(format!("`{name}` needs q")))?;
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidAnalysis(format!("quantile q={q} outside [0, 1]")));
                }
                q
            }
            _ => 0.0,
        };
        measures.push(Measure {
            func: a.func,
            dim,
            q,
            name,
        });
    }
    if let Some(b) = spec.bootstrap {
        if b.resamples < 2 {
            return Err(Error::InvalidAnalysis("bootstrap needs at least 2 resamples".into()));
        }
    }
    Ok(Plan {
        dims,
        filters,
        measures,
    })
}

/// Estimates for one measure over the (possibly resampled) values of a group.
/// `n_rows` is the number of group rows behind `values`.
fn estimate(m: &Measure, values: &[PropertyValue], n_rows: usize, s: f64, delta: usize) -> (PropertyValue, EstimatorKind, bool) {
    let exact = s == 1.0;
    let tag = |k: EstimatorKind| if exact { EstimatorKind::Exact } else { k };
    match m.func {
        AggFn::Count => {
            let v = if exact {
                PropertyValue::Int(n_rows as i64)
            } else {
                PropertyValue::Float(s * n_rows as f64)
            };
            (v, tag(EstimatorKind::HorvitzThompson), false)
        }
        AggFn::Sum => {
            let all_int = values.iter().all(|v| matches!(v, PropertyValue::Int(_)));
            let v = if exact && all_int {
                let total: i128 = values
                    .iter()
                    .map(|v| match v {
                        PropertyValue::Int(i) => *i as i128,
                        _ => 0,
                    })
                    .sum();
                i64::try_from(total)
                    .map(PropertyValue::Int)
                    .unwrap_or(PropertyValue::Float(total as f64))
            } else {
                let total: f64 = values.iter().filter_map(PropertyValue::as_f64).sum();
                PropertyValue::Float(s * total)
            };
            (v, tag(EstimatorKind::HorvitzThompson), false)
        }
        AggFn::Max | AggFn::Min => {
            let pick = if m.func == AggFn::Max {
                values.iter().max()
            } else {
                values.iter().min()
            };
            (
                pick.cloned().unwrap_or(PropertyValue::Null),
                tag(EstimatorKind::SampleExtreme),
                !exact,
            )
        }
        AggFn::DistinctCount => {
            let mut freq: BTreeMap<&PropertyValue, usize> = BTreeMap::new();
            for v in values {
                *freq.entry(v).or_default() += 1;
            }
            let d = freq.len();
            if exact {
                return (PropertyValue::Int(d as i64), EstimatorKind::Exact, false);
            }
            let f1 = freq.values().filter(|&&c| c == 1).count();
            (
                PropertyValue::Float(gee(values.len(), d, f1, s)),
                EstimatorKind::Gee,
                false,
            )
        }
        AggFn::Quantile => {
            if values.is_empty() {
                return (PropertyValue::Null, tag(EstimatorKind::TDigest), false);
            }
            if exact {
                let mut sorted = values.to_vec();
                sorted.sort();
                return (exact_quantile(&sorted, m.q).clone(), EstimatorKind::Exact, false);
            }
            let xs: Vec<f64> = values.iter().filter_map(PropertyValue::as_f64).collect();
            let digest = TDigest::new_with_size(delta).merge_unsorted(xs);
            let v = digest
                .estimate_quantile(m.q)
                .map(PropertyValue::Float)
                .unwrap_or(PropertyValue::Null);
            (v, EstimatorKind::TDigest, false)
        }
    }
}

/// GEE distinct-count estimate from `n` sampled values with `d` distinct
/// values of which `f1` occur once, population estimated as `s * n`.
pub fn gee(n: usize, d: usize, f1: usize, s: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let population = s * n as f64;
    (population / n as f64).sqrt() * f1 as f64 + (d - f1) as f64
}

/// Lower nearest-rank quantile of a sorted, non-empty slice.
pub fn exact_quantile<T>(sorted: &[T], q: f64) -> &T {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    &sorted[rank.clamp(1, n) - 1]
}

fn numeric(v: &PropertyValue) -> Option<f64> {
    v.as_f64()
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Runs filters, grouping and per-group estimation.
pub fn run_analysis(h: &Hypergraph, spec: &AnalysisSpec, opts: &AnalysisOptions) -> Result<ResultTable> {
    let plan = plan(h, spec)?;
    let s = h.scale_factor;

    let kept: Vec<usize> = (0..h.len())
        .into_par_iter()
        .filter(|&r| plan.filters.iter().all(|(d, p)| p.eval(&d.value(h, r))))
        .collect();

    let mut groups: BTreeMap<Vec<PropertyValue>, Vec<usize>> = BTreeMap::new();
    for &r in &kept {
        let key = plan.dims.iter().map(|d| d.value(h, r)).collect();
        groups.entry(key).or_default().push(r);
    }
    if plan.dims.is_empty() && groups.is_empty() {
        groups.insert(Vec::new(), Vec::new());
    }

    let groups: Vec<(Vec<PropertyValue>, Vec<usize>)> = groups.into_iter().collect();
    let rows: Vec<ResultRow> = groups
        .par_iter()
        .enumerate()
        .map(|(gi, (key, members))| {
            let column_values: Vec<Vec<PropertyValue>> = plan
                .measures
                .iter()
                .map(|m| match &m.dim {
                    Some(d) => members.iter().map(|&r| d.value(h, r)).collect(),
                    None => Vec::new(),
                })
                .collect();
            let non_null = |vals: &[PropertyValue]| -> Vec<PropertyValue> {
                vals.iter().filter(|v| !v.is_null()).cloned().collect()
            };
            let mut values = Vec::with_capacity(plan.measures.len());
            for (mi, m) in plan.measures.iter().enumerate() {
                let vals = non_null(&column_values[mi]);
                let (value, estimator, caveat) = estimate(m, &vals, members.len(), s, opts.tdigest_delta);
                let se = match spec.bootstrap {
                    Some(b) if !members.is_empty() => {
                        let mut rng = stream_rng(b.seed, (gi as u64) << 16 | mi as u64);
                        let n = members.len();
                        let mut stats = Vec::with_capacity(b.resamples);
                        let mut sample = Vec::with_capacity(n);
                        for _ in 0..b.resamples {
                            sample.clear();
                            for _ in 0..n {
                                let pick = rng.gen_range(0..n);
                                if m.dim.is_none() {
                                    continue;
                                }
                                let v = &column_values[mi][pick];
                                if !v.is_null() {
                                    sample.push(v.clone());
                                }
                            }
                            let (v, _, _) = estimate(m, &sample, n, s, opts.tdigest_delta);
                            if let Some(x) = numeric(&v) {
                                stats.push(x);
                            }
                        }
                        (stats.len() >= 2).then(|| std_dev(&stats))
                    }
                    _ => None,
                };
                values.push(Estimate {
                    name: m.name.clone(),
                    value,
                    estimator,
                    se,
                    caveat,
                });
            }
            ResultRow {
                key: key.clone(),
                values,
            }
        })
        .collect();

    Ok(ResultTable {
        group_by: spec.group.clone(),
        aggregates: plan.measures.iter().map(|m| m.name.clone()).collect(),
        scale_factor: s,
        rows,
    })
}

/// Applies the spec's filters to `h`, keeping its scale factor.
pub fn filter_hypergraph(h: &Hypergraph, filters: &[Filter]) -> Result<Hypergraph> {
    let spec = AnalysisSpec {
        filters: filters.to_vec(),
        ..Default::default()
    };
    let plan = plan(h, &spec)?;
    let mut out = h.clone();
    out.hyperedges = h
        .hyperedges
        .iter()
        .enumerate()
        .filter(|(r, _)| plan.filters.iter().all(|(d, p)| p.eval(&d.value(h, *r))))
        .map(|(_, e)| e.clone())
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gee_by_hand() {
        // {a, b, b, c}: d = 3, f1 = 2, s = 4 -> sqrt(4) * 2 + 1.
        assert_eq!(gee(4, 3, 2, 4.0), 5.0);
        assert_eq!(gee(4, 3, 2, 1.0), 3.0);
        assert_eq!(gee(0, 0, 0, 9.0), 0.0);
        // All singletons, s = 9: sqrt(9) * 5 + 0.
        assert_eq!(gee(5, 5, 5, 9.0), 15.0);
        // No singletons: estimate is the sample distinct count.
        assert_eq!(gee(6, 2, 0, 100.0), 2.0);
    }

    #[test]
    fn nearest_rank() {
        let xs = [10, 20, 30, 40];
        assert_eq!(*exact_quantile(&xs, 0.0), 10);
        assert_eq!(*exact_quantile(&xs, 0.5), 20);
        assert_eq!(*exact_quantile(&xs, 0.51), 30);
        assert_eq!(*exact_quantile(&xs, 1.0), 40);
    }

    #[test]
    fn cube_operators() {
        let base = AnalysisSpec::default();
        let a = base.drill_down("org0.country").unwrap();
        let b = a.drill_down("pub0.date:year").unwrap();
        assert_eq!(b.group, vec!["org0.country", "pub0.date:year"]);
        assert!(b.drill_down("org0.country").is_err());
        assert_eq!(b.roll_up("pub0.date:year").unwrap(), a);
        assert!(a.roll_up("nope").is_err());
        assert_eq!(a.slice("org0.country", "RU"), a.dice(vec![Filter::eq("org0.country", "RU")]));
    }

    #[test]
    fn spec_json_shape() {
        let text = r#"{"group":["a.x"],"filters":[{"column":"a.y","op":">","value":3}],
            "aggregates":[{"fn":"count"},{"fn":"quantile","column":"a.x","q":0.5,"name":"med"}],
            "bootstrap":{"resamples":50,"seed":1}}"#;
        let spec: AnalysisSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.aggregates[1].output_name(), "med");
        assert_eq!(spec.aggregates[0].output_name(), "count");
        let back: AnalysisSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
