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

use std::fs;
use std::path::Path;

use hyperbi_core::error::Error;
use hyperbi_core::join::JoinCondition;
use hyperbi_core::session::{Operator, Session, SessionConfig};
use hyperbi_core::GraphFiles;
use hyperbi_testkit::fixtures::running_example;
use hyperbi_testkit::generate::{write_instance, InstanceParams};

fn source_op(graph: &str, q: hyperbi_core::QueryGraph, dedup: bool) -> Operator {
    Operator::Source {
        graph: graph.into(),
        query: q,
        trials: None,
        seed: None,
        dedup,
    }
}

fn org_join() -> Operator {
    Operator::Join {
        condition: JoinCondition::parse("org0.org_name=org1.org_name").unwrap(),
        r: None,
        seed: None,
    }
}

fn running_session(s: &mut Session) -> [u64; 3] {
    s.load_graph("G0", &running_example::g0_files()).unwrap();
    s.load_graph("Gf", &running_example::gf_files()).unwrap();
    let a = s.derive(source_op("G0", running_example::q_s(), true), &[]).unwrap().node_id;
    let b = s.derive(source_op("Gf", running_example::q_f(), false), &[]).unwrap().node_id;
    let c = s.derive(org_join(), &[a, b]).unwrap().node_id;
    [a, b, c]
}

/// Copies the running-example CSVs into `dir` and points the files there.
fn copied_files(dir: &Path, files: &GraphFiles) -> GraphFiles {
    let copy = |p: &std::path::PathBuf| {
        let to = dir.join(p.file_name().unwrap());
        fs::copy(p, &to).unwrap();
        to
    };
    GraphFiles {
        vertex_files: files.vertex_files.iter().map(copy).collect(),
        edge_files: files.edge_files.iter().map(copy).collect(),
    }
}

#[test]
fn pipeline_counts_and_reuse() {
    let mut s = Session::new("s");
    let [a, b, c] = running_session(&mut s);
    let counts: Vec<usize> = s.list_tree().iter().map(|n| n.hyperedge_count).collect();
    assert_eq!(counts, vec![2, 2, 1]);
    assert_eq!(s.list_tree()[2].parents, vec![a, b]);

    let again = s.derive(org_join(), &[a, b]).unwrap();
    assert!(again.reused);
    assert_eq!(again.node_id, c);
    assert_eq!(s.node_count(), 3);
    assert_eq!(s.executions().source, 2);
    assert_eq!(s.executions().join, 1);

    // Matching semantics keep both orientations of each triangle, and both
    // orientations of the funded one survive the join.
    let all = s.derive(source_op("G0", running_example::q_s(), false), &[]).unwrap().node_id;
    assert_eq!(s.node(all).unwrap().hyperedge_count, 4);
    let joined = s.derive(org_join(), &[all, b]).unwrap().node_id;
    assert_eq!(s.node(joined).unwrap().hyperedge_count, 2);
    let d = s.derive(Operator::Dedup, &[all]).unwrap().node_id;
    assert_eq!(*s.hypergraph(d).unwrap().hyperedges, *s.hypergraph(a).unwrap().hyperedges);
}

#[test]
fn seeds_split_siblings_and_are_echoed() {
    let mut s = Session::new("s");
    s.load_graph("G0", &running_example::g0_files()).unwrap();
    let sampled = |seed| Operator::Source {
        graph: "G0".into(),
        query: running_example::q_s(),
        trials: Some(5),
        seed,
        dedup: false,
    };
    let a = s.derive(sampled(Some(1)), &[]).unwrap();
    let b = s.derive(sampled(Some(2)), &[]).unwrap();
    let a2 = s.derive(sampled(Some(1)), &[]).unwrap();
    assert_ne!(a.node_id, b.node_id);
    assert_eq!(a.node_id, a2.node_id);
    assert_eq!(a.seed, Some(1));
    let fresh = s.derive(sampled(None), &[]).unwrap();
    assert!(fresh.seed.is_some());
    assert!(!fresh.reused);
}

#[test]
fn errors_leave_no_node() {
    let mut s = Session::new("s");
    s.load_graph("G0", &running_example::g0_files()).unwrap();
    let v = s.version();
    assert!(matches!(s.derive(source_op("nope", running_example::q_s(), false), &[]), Err(Error::UnknownGraph(_))));
    assert!(matches!(s.derive(Operator::Dedup, &[7]), Err(Error::UnknownNode(7))));
    assert!(s.derive(Operator::Dedup, &[]).is_err());
    let a = s.derive(source_op("G0", running_example::q_s(), false), &[]).unwrap().node_id;
    let bad = Operator::Join {
        condition: JoinCondition::parse("org0.nope=org0.org_name").unwrap(),
        r: None,
        seed: None,
    };
    assert!(s.derive(bad, &[a, a]).is_err());
    assert_eq!(s.node_count(), 1);
    assert_eq!(s.version(), v + 1);
    assert!(matches!(
        s.derive_if_version(Operator::Dedup, &[a], Some(v)),
        Err(Error::Conflict { .. })
    ));
    assert!(s.derive_if_version(Operator::Dedup, &[a], Some(v + 1)).is_ok());
}

#[test]
fn save_load_round_trip_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new("s");
    let ids = running_session(&mut s);
    s.set_note(ids[2], Some("one funded pair".into())).unwrap();
    s.save(dir.path()).unwrap();
    assert!(dir.path().join("session.json").exists());

    let back = Session::load(dir.path()).unwrap();
    assert_eq!(back.list_tree(), s.list_tree());
    for id in ids {
        assert_eq!(*back.hypergraph(id).unwrap(), *s.hypergraph(id).unwrap());
        assert_eq!(back.replay(id).unwrap(), *s.hypergraph(id).unwrap());
    }
    assert_eq!(back.graph_names(), vec!["G0", "Gf"]);
}

#[test]
fn sampled_nodes_replay_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "r", &InstanceParams::gnp(300, 0.05, 3)).unwrap();
    let mut s = Session::persistent("s", dir.path().join("session")).unwrap();
    s.load_graph("R", &inst.files).unwrap();
    let q = hyperbi_core::QueryGraph::parse(
        r#"{"vertices":[{"name":"a","label":"V"},{"name":"b","label":"V"}],"edges":[{"src":"a","dst":"b","label":"E"}]}"#,
    )
    .unwrap();
    let src = s
        .derive(
            Operator::Source { graph: "R".into(), query: q.clone(), trials: Some(200), seed: Some(9), dedup: false },
            &[],
        )
        .unwrap()
        .node_id;
    let single = hyperbi_core::QueryGraph::parse(r#"{"vertices":[{"name":"c","label":"V"}],"edges":[]}"#).unwrap();
    let other = s
        .derive(Operator::Source { graph: "R".into(), query: single, trials: None, seed: None, dedup: false }, &[])
        .unwrap()
        .node_id;
    let join = s
        .derive(
            Operator::Join { condition: JoinCondition::parse("a.id=c.id").unwrap(), r: Some(50), seed: Some(4) },
            &[src, other],
        )
        .unwrap()
        .node_id;
    assert!(s.hypergraph(src).unwrap().scale_factor > 1.0);

    let back = Session::load(&dir.path().join("session")).unwrap();
    for id in [src, other, join] {
        let stored = back.hypergraph(id).unwrap();
        let replayed = back.replay(id).unwrap();
        assert_eq!(replayed.to_canonical(), stored.to_canonical());
    }
}

#[test]
fn missing_graph_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let files = copied_files(dir.path(), &running_example::g0_files());
    let mut s = Session::new("s");
    s.load_graph("G0", &files).unwrap();
    s.derive(source_op("G0", running_example::q_s(), false), &[]).unwrap();
    let sess = dir.path().join("sess");
    s.save(&sess).unwrap();
    fs::remove_file(&files.edge_files[1]).unwrap();
    match Session::load(&sess) {
        Err(Error::MissingFile(p)) => assert_eq!(p, files.edge_files[1]),
        other => panic!("expected a missing file error, got {other:?}"),
    }
}

#[test]
fn version_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Session::new("s");
    running_session(&mut s);
    s.save(dir.path()).unwrap();
    let path = dir.path().join("session.json");
    let text = fs::read_to_string(&path).unwrap().replacen("\"format\": 1", "\"format\": 99", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(Session::load(dir.path()), Err(Error::VersionMismatch { found: 99, .. })));
}

#[test]
fn large_nodes_are_held_lazily() {
    let dir = tempfile::tempdir().unwrap();
    let config = SessionConfig { lazy_row_threshold: 2, ..Default::default() };
    let mut s = Session::persistent("s", dir.path()).unwrap().with_config(config);
    s.load_graph("G0", &running_example::g0_files()).unwrap();
    let a = s.derive(source_op("G0", running_example::q_s(), false), &[]).unwrap().node_id;
    assert!(!s.node(a).unwrap().is_resident());
    assert_eq!(s.hypergraph(a).unwrap().len(), 4);
    assert!(s.node(a).unwrap().is_resident());
    let [_, b, c] = running_session(&mut s);
    assert!(s.node(b).unwrap().is_resident());

    let back = Session::load_with(dir.path(), config).unwrap();
    assert!(!back.node(a).unwrap().is_resident());
    assert!(back.node(c).unwrap().is_resident());
    assert_eq!(back.list_tree(), s.list_tree());
}
