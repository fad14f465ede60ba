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

//! Seeded random property graphs written in the loader's CSV format.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use chrono::NaiveDate;
use hyperbi_core::rng::stream_rng;
use hyperbi_core::graph::PropertyMap;
use hyperbi_core::{GraphBuilder, GraphFiles, PropertyGraph, PropertyValue};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropDist {
    IntUniform { lo: i64, hi: i64 },
    FloatUniform { lo: f64, hi: f64 },
    Categorical(Vec<String>),
    /// Uniform over `days` consecutive days starting at `from`.
    DateUniform { from: NaiveDate, days: u32 },
}

impl PropDist {
    fn type_name(&self) -> &'static str {
        match self {
            PropDist::IntUniform { .. } => "int",
            PropDist::FloatUniform { .. } => "float",
            PropDist::Categorical(_) => "text",
            PropDist::DateUniform { .. } => "date",
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> String {
        match self {
            PropDist::IntUniform { lo, hi } => rng.gen_range(*lo..=*hi).to_string(),
            PropDist::FloatUniform { lo, hi } => rng.gen_range(*lo..*hi).to_string(),
            PropDist::Categorical(c) => c[rng.gen_range(0..c.len())].clone(),
            PropDist::DateUniform { from, days } => {
                let d = *from + chrono::Days::new(rng.gen_range(0..*days) as u64);
                d.format("%Y-%m-%d").to_string()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropSpec {
    pub label: String,
    pub name: String,
    pub dist: PropDist,
    /// Probability a cell is left empty (null).
    #[serde(default)]
    pub null_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub n: usize,
    /// Label name and relative weight.
    pub labels: Vec<(String, f64)>,
    pub edge_p: f64,
    pub edge_label: String,
    pub props: Vec<PropSpec>,
    pub seed: u64,
}

impl InstanceParams {
    /// One label `V`, edge label `E`, no extra properties.
    pub fn gnp(n: usize, edge_p: f64, seed: u64) -> Self {
        InstanceParams {
            n,
            labels: vec![("V".into(), 1.0)],
            edge_p,
            edge_label: "E".into(),
            props: Vec::new(),
            seed,
        }
    }

    pub fn with_prop(mut self, label: &str, name: &str, dist: PropDist) -> Self {
        self.props.push(PropSpec {
            label: label.into(),
            name: name.into(),
            dist,
            null_rate: 0.0,
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub n: usize,
    pub edges: usize,
    pub label_counts: BTreeMap<String, usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub files: GraphFiles,
    pub summary: InstanceSummary,
}

/// Vertex labels in id order, drawn from the label stream of `seed`.
pub fn draw_labels(params: &InstanceParams) -> Vec<usize> {
    let weights: Vec<f64> = params.labels.iter().map(|l| l.1).collect();
    let dist = WeightedIndex::new(&weights).expect("positive label weights");
    let mut rng = stream_rng(params.seed, 0);
    (0..params.n).map(|_| dist.sample(&mut rng)).collect()
}

/// G(n, p) edge list over ids `0..n`, pairs `(v, w)` with `w < v`, by
/// geometric skipping.
pub fn draw_edges(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if p <= 0.0 || n < 2 {
        return out;
    }
    let mut rng = stream_rng(seed, 1);
    if p >= 1.0 {
        for v in 1..n {
            for w in 0..v {
                out.push((v, w));
            }
        }
        return out;
    }
    let lp = (1.0 - p).ln();
    let mut v: usize = 1;
    let mut w: i64 = -1;
    while v < n {
        let r: f64 = rng.gen();
        w += 1 + ((1.0 - r).ln() / lp).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            out.push((v, w as usize));
        }
    }
    out
}

/// Writes `<name>_<label>.csv` per vertex label, `<name>_<edge_label>.csv`,
/// and `<name>_summary.json` into `dir`.
pub fn write_instance(dir: &Path, name: &str, params: &InstanceParams) -> io::Result<Instance> {
    assert!(params.n > 0 && !params.labels.is_empty(), "instance needs vertices and labels");
    fs::create_dir_all(dir)?;
    let labels = draw_labels(params);
    let edges = draw_edges(params.n, params.edge_p, params.seed);
    let mut prop_rng = stream_rng(params.seed, 2);

    let mut files = GraphFiles::default();
    let mut label_counts = BTreeMap::new();
    for (li, (label, _)) in params.labels.iter().enumerate() {
        let specs: Vec<&PropSpec> = params.props.iter().filter(|p| &p.label == label).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id:int".to_string()];
        header.extend(specs.iter().map(|s| format!("{}:{}", s.name, s.dist.type_name())));
        w.write_record(&header)?;
        let mut count = 0;
        for (id, &l) in labels.iter().enumerate() {
            if l != li {
                continue;
            }
            count += 1;
            let mut rec = vec![id.to_string()];
            for s in &specs {
                let null = s.null_rate > 0.0 && prop_rng.gen::<f64>() < s.null_rate;
                let cell = s.dist.draw(&mut prop_rng);
                rec.push(if null { String::new() } else { cell });
            }
            w.write_record(&rec)?;
        }
        label_counts.insert(label.clone(), count);
        let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
        let path = dir.join(format!("{name}_{label}.csv"));
        fs::write(&path, format!("#label={label}\n{body}"))?;
        files.vertex_files.push(path);
    }

    let mut body = String::from("src:int,dst:int\n");
    for (v, w) in &edges {
        body.push_str(&format!("{w},{v}\n"));
    }
    let path = dir.join(format!("{name}_{}.csv", params.edge_label));
    fs::write(&path, format!("#label={}\n{body}", params.edge_label))?;
    files.edge_files.push(path);

    let summary = InstanceSummary {
        n: params.n,
        edges: edges.len(),
        label_counts,
        seed: params.seed,
    };
    fs::write(
        dir.join(format!("{name}_summary.json")),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(Instance { files, summary })
}

/// Small in-memory graph for property tests: ids `0..n`, labels and edge
/// labels drawn uniformly, G(n, p) edges, and two int properties
/// `k` (0..keys) and `w` (0..100).
pub fn random_graph(
    name: &str,
    n: usize,
    vertex_labels: &[&str],
    edge_labels: &[&str],
    p: f64,
    keys: i64,
    seed: u64,
) -> PropertyGraph {
    let mut rng = stream_rng(seed, 3);
    let mut b = GraphBuilder::new(name);
    for l in edge_labels {
        b.declare_edge_label(l, &[]).expect("fresh label");
    }
    for id in 0..n {
        let mut props = PropertyMap::new();
        props.insert("k".into(), PropertyValue::Int(rng.gen_range(0..keys.max(1))));
        props.insert("w".into(), PropertyValue::Int(rng.gen_range(0..100)));
        let label = vertex_labels[rng.gen_range(0..vertex_labels.len())];
        b.add_vertex(id as i64, label, props).expect("fresh id");
    }
    for (v, w) in draw_edges(n, p, seed) {
        let label = edge_labels[rng.gen_range(0..edge_labels.len())];
        b.add_edge(w as i64, v as i64, label, PropertyMap::new())
            .expect("distinct endpoints");
    }
    b.build().expect("generated graph is simple")
}
