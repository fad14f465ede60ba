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

//! Paths and loaders for the versioned fixture tree.

use std::path::PathBuf;
use std::sync::Arc;

use hyperbi_core::{load_graph, GraphFiles, PropertyGraph, QueryGraph};

/// `fixtures/v1` at the workspace root.
pub fn fixtures_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/v1")
}

pub fn read_text(rel: &str) -> String {
    let p = fixtures_root().join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("reading {}: {e}", p.display()))
}

pub fn query(rel: &str) -> QueryGraph {
    QueryGraph::parse(&read_text(rel)).unwrap_or_else(|e| panic!("parsing {rel}: {e}"))
}

fn files(dir: &str, vertices: &[&str], edges: &[&str]) -> GraphFiles {
    let root = fixtures_root().join(dir);
    GraphFiles {
        vertex_files: vertices.iter().map(|f| root.join(f)).collect(),
        edge_files: edges.iter().map(|f| root.join(f)).collect(),
    }
}

/// The small publication/organization graph and its org/funding companion.
pub mod running_example {
    use super::*;

    pub fn g0_files() -> GraphFiles {
        files("running_example", &["g0_pub.csv", "g0_org.csv"], &["g0_cite.csv", "g0_hai.csv"])
    }

    pub fn gf_files() -> GraphFiles {
        files("running_example", &["gf_org.csv", "gf_funding.csv"], &["gf_fund.csv"])
    }

    pub fn g0() -> Arc<PropertyGraph> {
        Arc::new(load_graph("G0", &g0_files()).expect("G0 fixture loads"))
    }

    pub fn gf() -> Arc<PropertyGraph> {
        Arc::new(load_graph("Gf", &gf_files()).expect("Gf fixture loads"))
    }

    pub fn q_s() -> QueryGraph {
        query("running_example/q_s.json")
    }

    pub fn q_f() -> QueryGraph {
        query("running_example/q_f.json")
    }

    pub fn expected(name: &str) -> String {
        read_text(&format!("running_example/expected/{name}"))
    }
}

/// Synthetic publication/organization/funding data for scripted sessions.
pub mod case_study {
    use super::*;

    pub fn dir() -> PathBuf {
        fixtures_root().join("case_study")
    }

    pub fn graph_files() -> GraphFiles {
        files(
            "case_study",
            &["pub.csv", "org.csv", "funding.csv"],
            &["hai.csv", "fund.csv"],
        )
    }

    pub fn graph() -> Arc<PropertyGraph> {
        Arc::new(load_graph("OA", &graph_files()).expect("case study fixture loads"))
    }
}
