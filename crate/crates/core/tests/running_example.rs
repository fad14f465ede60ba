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

use std::sync::Arc;

use hyperbi_core::analysis::{run_analysis, Aggregate, AnalysisOptions, AnalysisSpec};
use hyperbi_core::graph::ElementRef;
use hyperbi_core::hypergraph::{dedup, source, SourceOptions};
use hyperbi_core::join::{build_join_weights, join_complete, join_group_sample, JoinCondition};
use hyperbi_core::matcher::{
    build_candidate_space, compute_tree_weights, count_matches, enumerate_matches, sample_matches,
    ExactConfig, SampleConfig,
};
use hyperbi_core::view::{full_columns, project_view};
use hyperbi_core::{PropertyValue, QueryGraph};
use hyperbi_testkit::fixtures::running_example;
use hyperbi_testkit::oracles::{
    brute_force_matches, brute_force_tree_embeddings, oracle_candidates, oracle_join,
};

fn ids(g: &hyperbi_core::PropertyGraph, m: &[Vec<u32>]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = m.iter().map(|r| r.iter().map(|&v| g.vertex_id(v)).collect()).collect();
    out.sort();
    out
}

fn csv_rows(text: &str) -> Vec<Vec<i64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn g0_store_accessors() {
    let g = running_example::g0();
    assert_eq!((g.vertex_count(), g.edge_count()), (7, 7));
    assert_eq!(g.has_edge(0, 1).unwrap(), Some("Cite"));
    assert!(g.has_edge(0, 0).is_err());
    let n: Vec<i64> = g.neighbors(4, Some("HAI"), None).unwrap().into_iter().map(|(v, _)| v).collect();
    assert_eq!(n, vec![0, 1]);
    assert_eq!(
        g.get_property(ElementRef::Vertex(4), "org_name").unwrap(),
        PropertyValue::Text("Org0".into())
    );
}

#[test]
fn q_s_shape_and_symmetry() {
    let q = running_example::q_s();
    assert_eq!((q.vertex_count(), q.edge_count()), (3, 3));
    let f = q.spanning_forest();
    assert_eq!(f.tree_edges.len(), 2);
    assert_eq!(f.non_tree_edges.len(), 1);
    assert_eq!(q.automorphisms().unwrap().len(), 2);
}

#[test]
fn q_s_matchings_agree_with_oracle_and_fixture() {
    let g = running_example::g0();
    let q = running_example::q_s();
    let engine = enumerate_matches(&g, &q, &ExactConfig::default()).unwrap();
    let oracle = brute_force_matches(&g, &q);
    assert_eq!(engine.matches, oracle);
    assert_eq!(ids(&g, &engine.matches), csv_rows(&running_example::expected("q_s_matchings.csv")));
    assert_eq!(count_matches(&g, &q), 4);
}

#[test]
fn label_scan_and_disconnected_pairs() {
    let g = running_example::g0();
    let org = QueryGraph::parse(r#"{"vertices":[{"name":"o","label":"Org"}],"edges":[]}"#).unwrap();
    let m = enumerate_matches(&g, &org, &ExactConfig::default()).unwrap();
    assert_eq!(ids(&g, &m.matches), vec![vec![4], vec![6], vec![7]]);

    let pair = QueryGraph::parse(
        r#"{"vertices":[{"name":"p","label":"Pub"},{"name":"o","label":"Org"}],"edges":[]}"#,
    )
    .unwrap();
    let m = enumerate_matches(&g, &pair, &ExactConfig::default()).unwrap();
    assert_eq!(m.matches.len(), 8);
    assert_eq!(m.matches, brute_force_matches(&g, &pair));
}

#[test]
fn candidate_space_and_tree_weights() {
    let g = running_example::g0();
    let q = running_example::q_s();
    let local = oracle_candidates(&g, &q);
    assert_eq!(ids(&g, &local[..1]), vec![vec![0, 1, 2]]);
    assert_eq!(ids(&g, &local[2..]), vec![vec![4, 6, 7]]);

    let cs = build_candidate_space(&g, &q);
    for (u, c) in cs.candidates.iter().enumerate() {
        assert!(c.iter().all(|v| local[u].contains(v)), "refinement only removes");
    }
    let wt = compute_tree_weights(&cs).unwrap();
    let brute = brute_force_tree_embeddings(&g, &q, &cs.candidates, &cs.forest.tree_edges);
    assert_eq!(wt.total, brute);
    assert!(wt.total >= 4);

    let path = QueryGraph::parse(
        r#"{"vertices":[{"name":"a","label":"Pub"},{"name":"b","label":"Pub"}],
            "edges":[{"src":"a","dst":"b","label":"Cite"}]}"#,
    )
    .unwrap();
    let cs = build_candidate_space(&g, &path);
    assert_eq!(compute_tree_weights(&cs).unwrap().total, 6);
}

#[test]
fn q_s_sampling_falls_back_to_exact() {
    let g = running_example::g0();
    let r = sample_matches(&g, &running_example::q_s(), &SampleConfig::new(10_000, 7)).unwrap();
    assert!(r.exact);
    assert_eq!(r.matches.len(), 4);
    assert_eq!(r.estimated_total, 4.0);
    assert_eq!(r.scale_factor, 1.0);
}

#[test]
fn source_dedup_and_columns() {
    let g = running_example::g0();
    let h = source(g.clone(), &running_example::q_s(), &SourceOptions::exact()).unwrap();
    assert_eq!(h.len(), 4);
    let d = dedup(&h).unwrap();
    assert_eq!(d.len(), 2);
    let mut opts = SourceOptions::exact();
    opts.dedup_automorphic = true;
    let d2 = source(g, &running_example::q_s(), &opts).unwrap();
    assert_eq!(d2.len(), 2);
    assert_eq!(d2.to_canonical(), running_example::expected("g0_dedup.hg"));

    let first = &d2.hyperedges[0];
    assert_eq!(first.topology.name(3), "Triangle");
    let col = d2.resolve_column("org0.org_name").unwrap();
    assert_eq!(d2.column_value(first, &col), PropertyValue::Text("Org0".into()));
}

#[test]
fn funding_view_matches_table() {
    let gf = running_example::gf();
    let hf = source(gf, &running_example::q_f(), &SourceOptions::exact()).unwrap();
    assert_eq!(hf.len(), 2);
    let v = project_view(&hf, Some(&full_columns(&hf))).unwrap();
    assert_eq!(v.to_csv(), running_example::expected("funded_view.csv"));
}

#[test]
fn join_on_org_name_keeps_one_hyperedge() {
    let mut opts = SourceOptions::exact();
    opts.dedup_automorphic = true;
    let h0 = source(running_example::g0(), &running_example::q_s(), &opts).unwrap();
    let hf = source(running_example::gf(), &running_example::q_f(), &SourceOptions::exact()).unwrap();
    let cond = JoinCondition::parse("org0.org_name=org1.org_name").unwrap();

    let w = build_join_weights(&h0, &hf, &cond).unwrap();
    assert_eq!(w.total, 1);
    assert_eq!((w.weight(0), w.weight(1)), (1, 0));

    let j = join_complete(&h0, &hf, &cond).unwrap();
    assert_eq!(j.len(), 1);
    assert_eq!(j.query().vertex_count(), 5);
    assert_eq!(j.query().edge_count(), 4);
    assert_eq!(project_view(&j, None).unwrap().to_csv(), running_example::expected("join_view.csv"));

    let s = join_group_sample(&h0, &hf, &cond, 10, 3).unwrap();
    assert_eq!(s.hyperedges, j.hyperedges);
    assert_eq!(s.scale_factor, 1.0);

    // Nested-loop oracle over the two views.
    let left = project_view(&h0, Some(&["org0.org_name".to_string()])).unwrap();
    let right = project_view(&hf, Some(&["org1.org_name".to_string()])).unwrap();
    assert_eq!(oracle_join(&left.rows, &right.rows, &[(0, 0)]).len(), 1);

    let spec = AnalysisSpec {
        aggregates: vec![Aggregate::count()],
        ..Default::default()
    };
    let t = run_analysis(&j, &spec, &AnalysisOptions::default()).unwrap();
    assert_eq!(t.rows[0].values[0].value, PropertyValue::Int(1));
}

#[test]
fn graphs_are_shared_not_copied() {
    let g = running_example::g0();
    let h = source(g.clone(), &running_example::q_s(), &SourceOptions::exact()).unwrap();
    assert!(Arc::ptr_eq(&h.graphs()[0], &g));
}
