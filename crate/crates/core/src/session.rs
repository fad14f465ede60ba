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

//! The exploration tree: every derived hypergraph with the operator and
//! parents that produced it, memoized by (operator, parameters, seed,
//! parents) and persisted as a directory.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::analysis::{run_analysis, AnalysisOptions, AnalysisSpec, ResultTable};
use crate::error::{Error, Result};
use crate::graph::{load_graph, GraphFiles, PropertyGraph};
use crate::hypergraph::{dedup, source, Hypergraph, SourceMode, SourceOptions};
use crate::join::{join_complete, join_group_sample, JoinCondition};
use crate::matcher::ExactConfig;
use crate::query::QueryGraph;
use crate::rng::fresh_seed;
use crate::view::{project_page, ViewTable};

pub const SESSION_FORMAT: u32 = 1;
pub const SESSION_FILE: &str = "session.json";
const NODE_DIR: &str = "nodes";

pub type NodeId = u64;

/// Operator descriptor; together with the parents it suffices to replay a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operator {
    Source {
        graph: String,
        query: QueryGraph,
        /// Absent for exact enumeration.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trials: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default)]
        dedup: bool,
    },
    Join {
        condition: JoinCondition,
        /// Group-sample size; absent for the complete join.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Dedup,
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::Source { .. } => "source",
            Operator::Join { .. } => "join",
            Operator::Dedup => "dedup",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Operator::Source { .. } => 0,
            Operator::Join { .. } => 2,
            Operator::Dedup => 1,
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(
            self,
            Operator::Source { trials: Some(_), .. } | Operator::Join { r: Some(_), .. }
        )
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Operator::Source { seed, .. } | Operator::Join { seed, .. } => *seed,
            Operator::Dedup => None,
        }
    }

    /// Exact operators drop any seed; sampled ones get a fresh seed if missing.
    fn normalized(mut self) -> Self {
        let sampled = self.is_sampled();
        if let Operator::Source { seed, .. } | Operator::Join { seed, .. } = &mut self {
            if !sampled {
                *seed = None;
            } else if seed.is_none() {
                *seed = Some(fresh_seed());
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    pub exact: ExactConfig,
    /// Hypergraphs with more rows than this are held on disk until accessed.
    pub lazy_row_threshold: usize,
    pub analysis: AnalysisOptions,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            exact: ExactConfig::default(),
            lazy_row_threshold: 1_000_000,
            analysis: AnalysisOptions::default(),
        }
    }
}

/// Hypergraph rows, resident or backed by a canonical file.
#[derive(Debug)]
struct NodeData {
    cell: OnceLock<Arc<Hypergraph>>,
    file: Option<PathBuf>,
}

impl NodeData {
    fn resident(h: Hypergraph) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(Arc::new(h));
        NodeData { cell, file: None }
    }
}

#[derive(Debug)]
pub struct TreeNode {
    pub id: NodeId,
    pub parents: Vec<NodeId>,
    pub op: Operator,
    pub created_at: String,
    pub note: Option<String>,
    pub hyperedge_count: usize,
    pub scale_factor: f64,
    data: NodeData,
}

impl TreeNode {
    pub fn is_resident(&self) -> bool {
        self.data.cell.get().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub op: String,
    pub parents: Vec<NodeId>,
    pub hyperedge_count: usize,
    pub scale_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeriveOutcome {
    pub node_id: NodeId,
    pub reused: bool,
    pub seed: Option<u64>,
}

/// Engine invocations per operator kind; memo hits do not count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExecutionCounts {
    pub source: u64,
    pub join: u64,
    pub dedup: u64,
}

#[derive(Serialize, Deserialize)]
struct SessionDoc {
    format: u32,
    id: String,
    graphs: BTreeMap<String, GraphFiles>,
    next_id: NodeId,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: NodeId,
    parents: Vec<NodeId>,
    op: Operator,
    created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    rows: usize,
    scale_factor: f64,
    file: String,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    graphs: BTreeMap<String, Arc<PropertyGraph>>,
    nodes: BTreeMap<NodeId, TreeNode>,
    memo: HashMap<(String, Vec<NodeId>), NodeId>,
    next_id: NodeId,
    dir: Option<PathBuf>,
    version: u64,
    executions: ExecutionCounts,
    pub config: SessionConfig,
}

fn memo_key(op: &Operator, parents: &[NodeId]) -> (String, Vec<NodeId>) {
    (
        serde_json::to_string(op).expect("operators serialize"),
        parents.to_vec(),
    )
}

fn node_file(id: NodeId) -> String {
    format!("{NODE_DIR}/{id}.hg")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl Session {
    pub fn new(id: impl Into<String>) -> Self {
        Session {
            id: id.into(),
            graphs: BTreeMap::new(),
            nodes: BTreeMap::new(),
            memo: HashMap::new(),
            next_id: 0,
            dir: None,
            version: 0,
            executions: ExecutionCounts::default(),
            config: SessionConfig::default(),
        }
    }

    /// A session that writes itself to `dir` after every change.
    pub fn persistent(id: impl Into<String>, dir: impl Into<PathBuf>) -> Result<Self> {
        let mut s = Session::new(id);
        s.dir = Some(dir.into());
        s.persist()?;
        Ok(s)
    }

    pub fn with_config(mut self, config: SessionConfig) -> Self {
        self.config = config;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Bumped on every mutation; used for optimistic concurrency checks.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn executions(&self) -> ExecutionCounts {
        self.executions
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn graph(&self, name: &str) -> Result<&Arc<PropertyGraph>> {
        self.graphs
            .get(name)
            .ok_or_else(|| Error::UnknownGraph(name.to_string()))
    }

    pub fn graph_names(&self) -> Vec<&str> {
        self.graphs.keys().map(String::as_str).collect()
    }

    /// Registers `g` under its name. Re-registering the same files is a no-op.
    pub fn register_graph(&mut self, g: Arc<PropertyGraph>) -> Result<()> {
        if let Some(old) = self.graphs.get(g.name()) {
            if Arc::ptr_eq(old, &g) || (old.files() == g.files() && !g.files().vertex_files.is_empty()) {
                return Ok(());
            }
            return Err(Error::InvalidArgument(format!(
                "graph `{}` is already registered with different contents",
                g.name()
            )));
        }
        self.graphs.insert(g.name().to_string(), g);
        self.version += 1;
        self.persist()
    }

    pub fn load_graph(&mut self, name: &str, files: &GraphFiles) -> Result<Arc<PropertyGraph>> {
        if let Some(old) = self.graphs.get(name) {
            if old.files() == files {
                return Ok(old.clone());
            }
        }
        let g = Arc::new(load_graph(name, files)?);
        self.register_graph(g.clone())?;
        Ok(g)
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(&id).ok_or(Error::UnknownNode(id))
    }

    /// The node's hypergraph, reading it from disk on first access if needed.
    pub fn hypergraph(&self, id: NodeId) -> Result<Arc<Hypergraph>> {
        let node = self.node(id)?;
        if let Some(h) = node.data.cell.get() {
            return Ok(h.clone());
        }
        let file = node
            .data
            .file
            .as_ref()
            .expect("non-resident nodes are file backed");
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let h = Hypergraph::from_canonical(&text, &|n| self.graph(n).cloned())?;
        let _ = node.data.cell.set(Arc::new(h));
        Ok(node.data.cell.get().expect("just set").clone())
    }

    /// Applies `op` to `parents`, or returns the existing node for an
    /// identical request. Engine errors leave the session unchanged.
    pub fn derive(&mut self, op: Operator, parents: &[NodeId]) -> Result<DeriveOutcome> {
        if parents.len() != op.arity() {
            return Err(Error::InvalidArgument(format!(
                "{} takes {} parent(s), got {}",
                op.name(),
                op.arity(),
                parents.len()
            )));
        }
        for &p in parents {
            self.node(p)?;
        }
        let op = op.normalized();
        let key = memo_key(&op, parents);
        if let Some(&id) = self.memo.get(&key) {
            return Ok(DeriveOutcome {
                node_id: id,
                reused: true,
                seed: op.seed(),
            });
        }
        let h = self.execute(&op, parents)?;
        match op {
            Operator::Source { .. } => self.executions.source += 1,
            Operator::Join { .. } => self.executions.join += 1,
            Operator::Dedup => self.executions.dedup += 1,
        }
        let id = self.next_id;
        self.next_id += 1;
        let seed = op.seed();
        let node = TreeNode {
            id,
            parents: parents.to_vec(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            note: None,
            hyperedge_count: h.len(),
            scale_factor: h.scale_factor,
            op,
            data: NodeData::resident(h),
        };
        self.memo.insert(key, id);
        self.nodes.insert(id, node);
        self.version += 1;
        if let Err(e) = self.persist_node(id).and_then(|_| self.persist()) {
            let node = self.nodes.remove(&id).expect("inserted above");
            self.memo.remove(&memo_key(&node.op, &node.parents));
            return Err(e);
        }
        Ok(DeriveOutcome {
            node_id: id,
            reused: false,
            seed,
        })
    }

    /// [`Session::derive`] guarded by the session version seen by the caller.
    pub fn derive_if_version(
        &mut self,
        op: Operator,
        parents: &[NodeId],
        expected: Option<u64>,
    ) -> Result<DeriveOutcome> {
        self.check_version(expected)?;
        self.derive(op, parents)
    }

    pub fn check_version(&self, expected: Option<u64>) -> Result<()> {
        match expected {
            Some(v) if v != self.version => Err(Error::Conflict {
                expected: v,
                found: self.version,
            }),
            _ => Ok(()),
        }
    }

    fn execute(&self, op: &Operator, parents: &[NodeId]) -> Result<Hypergraph> {
        match op {
            Operator::Source {
                graph,
                query,
                trials,
                seed,
                dedup,
            } => {
                let g = self.graph(graph)?.clone();
                let opts = SourceOptions {
                    mode: match trials {
                        Some(t) => SourceMode::Sampled { trials: *t },
                        None => SourceMode::Exact,
                    },
                    seed: *seed,
                    dedup_automorphic: *dedup,
                    exact: self.config.exact,
                };
                source(g, query, &opts)
            }
            Operator::Join { condition, r, seed } => {
                let left = self.hypergraph(parents[0])?;
                let right = self.hypergraph(parents[1])?;
                match r {
                    Some(r) => join_group_sample(&left, &right, condition, *r, seed.expect("normalized")),
                    None => join_complete(&left, &right, condition),
                }
            }
            Operator::Dedup => dedup(&*self.hypergraph(parents[0])?),
        }
    }

    /// Recomputes node `id` from its parents and recorded operator.
    pub fn replay(&self, id: NodeId) -> Result<Hypergraph> {
        let node = self.node(id)?;
        self.execute(&node.op, &node.parents)
    }

    pub fn set_note(&mut self, id: NodeId, note: Option<String>) -> Result<()> {
        self.nodes.get_mut(&id).ok_or(Error::UnknownNode(id))?.note = note;
        self.version += 1;
        self.persist()
    }

    /// Node summaries in creation order, which is a topological order.
    pub fn list_tree(&self) -> Vec<NodeSummary> {
        self.nodes
            .values()
            .map(|n| NodeSummary {
                id: n.id,
                op: n.op.name().to_string(),
                parents: n.parents.clone(),
                hyperedge_count: n.hyperedge_count,
                scale_factor: n.scale_factor,
                seed: n.op.seed(),
                created_at: n.created_at.clone(),
                note: n.note.clone(),
            })
            .collect()
    }

    pub fn view(&self, id: NodeId, columns: Option<&[String]>, offset: usize, limit: usize) -> Result<ViewTable> {
        project_page(&*self.hypergraph(id)?, columns, offset, limit)
    }

    pub fn analyze(&self, id: NodeId, spec: &AnalysisSpec) -> Result<ResultTable> {
        run_analysis(&*self.hypergraph(id)?, spec, &self.config.analysis)
    }

    fn persist_node(&mut self, id: NodeId) -> Result<()> {
        let Some(dir) = self.dir.clone() else {
            return Ok(());
        };
        let threshold = self.config.lazy_row_threshold;
        let node = self.nodes.get_mut(&id).expect("node exists");
        let path = dir.join(node_file(id));
        if node.data.file.as_deref() == Some(path.as_path()) {
            return Ok(());
        }
        let h = node.data.cell.get().expect("fresh nodes are resident").clone();
        write_file(&path, &h.to_canonical())?;
        node.data.file = Some(path);
        if node.hyperedge_count > threshold {
            node.data.cell = OnceLock::new();
        }
        Ok(())
    }

    fn persist(&self) -> Result<()> {
        match &self.dir {
            Some(dir) => self.write_doc(dir),
            None => Ok(()),
        }
    }

    fn write_doc(&self, dir: &Path) -> Result<()> {
        let mut graphs = BTreeMap::new();
        for (name, g) in &self.graphs {
            if g.files().vertex_files.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "graph `{name}` was not loaded from files and cannot be persisted"
                )));
            }
            graphs.insert(name.clone(), g.files().clone());
        }
        let doc = SessionDoc {
            format: SESSION_FORMAT,
            id: self.id.clone(),
            graphs,
            next_id: self.next_id,
            nodes: self
                .nodes
                .values()
                .map(|n| NodeDoc {
                    id: n.id,
                    parents: n.parents.clone(),
                    op: n.op.clone(),
                    created_at: n.created_at.clone(),
                    note: n.note.clone(),
                    rows: n.hyperedge_count,
                    scale_factor: n.scale_factor,
                    file: node_file(n.id),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&doc)?;
        write_file(&dir.join(SESSION_FILE), &text)
    }

    /// Writes the session directory: `session.json` plus one canonical
    /// hypergraph file per node.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for id in self.nodes.keys() {
            let path = dir.join(node_file(*id));
            let same = self.nodes[id].data.file.as_deref() == Some(path.as_path());
            if !same {
                write_file(&path, &self.hypergraph(*id)?.to_canonical())?;
            }
        }
        self.write_doc(dir)
    }

    /// Reads a session directory, reloading graphs from their recorded files.
    /// The loaded session keeps persisting to `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        Self::load_with(dir, SessionConfig::default())
    }

    pub fn load_with(dir: &Path, config: SessionConfig) -> Result<Self> {
        let path = dir.join(SESSION_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let head: serde_json::Value = serde_json::from_str(&text)?;
        let found = head.get("format").and_then(|f| f.as_u64()).unwrap_or(0) as u32;
        if found != SESSION_FORMAT {
            return Err(Error::VersionMismatch {
                found,
                expected: SESSION_FORMAT,
            });
        }
        let doc: SessionDoc = serde_json::from_value(head)?;
        let mut s = Session::new(doc.id).with_config(config);
        for (name, files) in &doc.graphs {
            let g = load_graph(name, files)?;
            s.graphs.insert(name.clone(), Arc::new(g));
        }
        for nd in doc.nodes {
            if nd.parents.iter().any(|p| *p >= nd.id || !s.nodes.contains_key(p)) {
                return Err(Error::Serde(format!("node {} lists a parent that does not precede it", nd.id)));
            }
            if nd.parents.len() != nd.op.arity() {
                return Err(Error::Serde(format!("node {} has the wrong number of parents", nd.id)));
            }
            let file = dir.join(&nd.file);
            if !file.exists() {
                return Err(Error::MissingFile(file));
            }
            let node = TreeNode {
                id: nd.id,
                parents: nd.parents,
                op: nd.op,
                created_at: nd.created_at,
                note: nd.note,
                hyperedge_count: nd.rows,
                scale_factor: nd.scale_factor,
                data: NodeData {
                    cell: OnceLock::new(),
                    file: Some(file),
                },
            };
            s.memo.insert(memo_key(&node.op, &node.parents), node.id);
            s.nodes.insert(node.id, node);
            if nd.rows <= config.lazy_row_threshold {
                s.hypergraph(nd.id)?;
            }
        }
        s.next_id = doc.next_id.max(s.nodes.keys().next_back().map_or(0, |k| k + 1));
        s.dir = Some(dir.to_path_buf());
        Ok(s)
    }
}
