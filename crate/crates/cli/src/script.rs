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

//! Exploration scripts: one command per line, `#` starts a comment.
//!
//! ```text
//! load G0 vertices=pub.csv,org.csv edges=cite.csv,hai.csv
//! source base G0 q.json [trials=N | sampled] [seed=S] [dedup]
//! join j base other [on=a.k=b.k;a.x=b.y] [r=N] [seed=S]
//! dedup d base
//! view j [cols=a.id,b.k | cols=full] [offset=N] [limit=N] [out=view.csv]
//! analyze j [group=a.k,p.date:year] [agg=count,sum:a.w,quantile:a.w:0.9]
//!           [where=a.k>=3]... [spec=spec.json] [bootstrap=200:7] [out=t.csv]
//! tree [out=tree.json]
//! save session-dir
//! ```
//!
//! Paths are relative to the script's directory, `out=` paths to the
//! output directory. Values may be double-quoted to include spaces.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use hyperbi_core::analysis::{AggFn, Aggregate, AnalysisSpec, Bootstrap, Filter, ResultTable};
use hyperbi_core::join::JoinCondition;
use hyperbi_core::query::Operand;
use hyperbi_core::session::{NodeId, Operator, Session};
use hyperbi_core::view::full_columns;
use hyperbi_core::{CompareOp, Error, GraphFiles, PropertyValue, QueryGraph, Result};
use serde::Serialize;

use crate::config::Config;

/// Rows printed by `view` without `limit=` or `out=`.
const DEFAULT_PRINT_ROWS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Load {
        graph: String,
        files: GraphFiles,
    },
    Source {
        node: String,
        graph: String,
        query: QueryGraph,
        trials: Option<u64>,
        seed: Option<u64>,
        dedup: bool,
    },
    Join {
        node: String,
        left: String,
        right: String,
        condition: JoinCondition,
        r: Option<u64>,
        seed: Option<u64>,
    },
    Dedup {
        node: String,
        parent: String,
    },
    View {
        node: String,
        columns: Option<Vec<String>>,
        full: bool,
        offset: usize,
        limit: Option<usize>,
        out: Option<PathBuf>,
    },
    Analyze {
        node: String,
        spec: AnalysisSpec,
        out: Option<PathBuf>,
    },
    Tree {
        out: Option<PathBuf>,
    },
    Save {
        dir: PathBuf,
    },
}

impl Command {
    /// The node name this command defines, if any.
    fn defines(&self) -> Option<&str> {
        match self {
            Command::Source { node, .. } | Command::Join { node, .. } | Command::Dedup { node, .. } => Some(node),
            _ => None,
        }
    }

    fn uses(&self) -> Vec<&str> {
        match self {
            Command::Join { left, right, .. } => vec![left, right],
            Command::Dedup { parent, .. } => vec![parent],
            Command::View { node, .. } | Command::Analyze { node, .. } => vec![node],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub number: usize,
    pub text: String,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub lines: Vec<Line>,
}

/// An error tied to the script line that raised it.
#[derive(Debug)]
pub struct ScriptError {
    pub line: usize,
    pub command: String,
    pub error: Error,
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} `{}`: {}", self.line, self.command, self.error)
    }
}

impl std::error::Error for ScriptError {}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    code: &'a str,
    message: String,
    line: usize,
    command: &'a str,
}

impl ScriptError {
    /// `{"error": {code, message, line, command}}`.
    pub fn to_json(&self) -> String {
        let doc = ErrorDoc {
            code: self.error.code(),
            message: self.error.to_string(),
            line: self.line,
            command: &self.command,
        };
        serde_json::json!({ "error": doc }).to_string()
    }
}

/// Whitespace split that honours double quotes inside a token.
fn tokenize(line: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut started = false;
    for c in line.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                started = true;
            }
            c if c.is_whitespace() && !quoted => {
                if started {
                    out.push(std::mem::take(&mut cur));
                    started = false;
                }
            }
            c => {
                cur.push(c);
                started = true;
            }
        }
    }
    if quoted {
        return Err(Error::InvalidArgument("unterminated quote".into()));
    }
    if started {
        out.push(cur);
    }
    Ok(out)
}

/// Strips a trailing comment that is not inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

struct Args {
    positional: Vec<String>,
    named: Vec<(String, String)>,
    flags: BTreeSet<String>,
}

impl Args {
    fn split(tokens: &[String], allowed: &[&str], flags: &[&str]) -> Result<Self> {
        let mut a = Args {
            positional: Vec::new(),
            named: Vec::new(),
            flags: BTreeSet::new(),
        };
        for t in tokens {
            match t.split_once('=') {
                Some((k, v)) if allowed.contains(&k) => a.named.push((k.to_string(), v.to_string())),
                Some((k, _)) => return Err(Error::InvalidArgument(format!("unknown option `{k}`"))),
                _ if flags.contains(&t.as_str()) => {
                    a.flags.insert(t.clone());
                }
                _ => {
                    if !a.named.is_empty() {
                        return Err(Error::InvalidArgument(format!("positional `{t}` after options")));
                    }
                    a.positional.push(t.clone())
                }
            }
        }
        Ok(a)
    }

    fn positional(&self, n: usize, usage: &str) -> Result<&[String]> {
        if self.positional.len() != n {
            return Err(Error::InvalidArgument(format!("usage: {usage}")));
        }
        Ok(&self.positional)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.named.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.named.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidArgument(format!("`{key}` needs a non-negative integer, got `{v}`")))
            })
            .transpose()
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

/// `count`, `sum:col`, `max:col`, `min:col`, `distinct_count:col` (or
/// `distinct:col`), `quantile:col:q`.
pub fn parse_aggregate(s: &str) -> Result<Aggregate> {
    let mut parts = s.splitn(2, ':');
    let head = parts.next().unwrap_or_default();
    let rest = parts.next();
    let func = match head {
        "distinct" => AggFn::DistinctCount,
        h => AggFn::parse(h).ok_or_else(|| Error::InvalidAnalysis(format!("unknown aggregate `{h}`")))?,
    };
    match (func, rest) {
        (AggFn::Count, None) => Ok(Aggregate::count()),
        (AggFn::Count, Some(c)) => Ok(Aggregate::of(AggFn::Count, c)),
        (AggFn::Quantile, Some(r)) => {
            let (col, q) = r
                .rsplit_once(':')
                .ok_or_else(|| Error::InvalidAnalysis(format!("`{s}` needs quantile:column:q")))?;
            let q: f64 = q
                .parse()
                .map_err(|_| Error::InvalidAnalysis(format!("bad quantile level `{q}`")))?;
            Ok(Aggregate::quantile(col, q))
        }
        (f, Some(c)) => Ok(Aggregate::of(f, c)),
        (_, None) => Err(Error::InvalidAnalysis(format!("`{s}` needs a column"))),
    }
}

/// `column<op>value` with op one of `= != < <= > >=`.
pub fn parse_filter(s: &str) -> Result<Filter> {
    const OPS: [&str; 6] = [">=", "<=", "!=", "=", "<", ">"];
    let (pos, sym) = OPS
        .iter()
        .filter_map(|op| s.find(op).map(|p| (p, *op)))
        .min_by_key(|(p, op)| (*p, std::cmp::Reverse(op.len())))
        .ok_or_else(|| Error::InvalidAnalysis(format!("filter `{s}` has no comparison")))?;
    let op = CompareOp::parse(sym).expect("listed operators parse");
    let column = s[..pos].trim();
    if column.is_empty() {
        return Err(Error::InvalidAnalysis(format!("filter `{s}` has no column")));
    }
    Ok(Filter {
        column: column.to_string(),
        op,
        value: Operand::Scalar(PropertyValue::parse_literal(s[pos + sym.len()..].trim())),
    })
}

fn parse_command(tokens: &[String], base: &Path, config: &Config) -> Result<Command> {
    let (verb, rest) = tokens.split_first().expect("non-empty line");
    let path = |p: &str| base.join(p);
    match verb.as_str() {
        "load" => {
            let a = Args::split(rest, &["vertices", "edges"], &[])?;
            let graph = a.positional(1, "load <graph> vertices=a.csv,... edges=b.csv,...")?[0].clone();
            let files = GraphFiles {
                vertex_files: a.get("vertices").map(list).unwrap_or_default().iter().map(|p| path(p)).collect(),
                edge_files: a.get("edges").map(list).unwrap_or_default().iter().map(|p| path(p)).collect(),
            };
            if files.vertex_files.is_empty() {
                return Err(Error::InvalidArgument("load needs at least one vertex file".into()));
            }
            for f in files.vertex_files.iter().chain(&files.edge_files) {
                if !f.exists() {
                    return Err(Error::MissingFile(f.clone()));
                }
            }
            Ok(Command::Load { graph, files })
        }
        "source" => {
            let a = Args::split(rest, &["trials", "seed"], &["dedup", "sampled"])?;
            let p = a.positional(3, "source <node> <graph> <query.json> [trials=N|sampled] [seed=S] [dedup]")?;
            let query = QueryGraph::parse(&read(&path(&p[2]))?)?;
            let mut trials = a.number("trials")?;
            if trials.is_none() && a.flags.contains("sampled") {
                trials = Some(config.default_trials);
            }
            if trials == Some(0) {
                return Err(Error::InvalidArgument("trials must be positive".into()));
            }
            Ok(Command::Source {
                node: p[0].clone(),
                graph: p[1].clone(),
                query,
                trials,
                seed: a.number("seed")?,
                dedup: a.flags.contains("dedup"),
            })
        }
        "join" => {
            let a = Args::split(rest, &["on", "r", "seed"], &[])?;
            let p = a.positional(3, "join <node> <left> <right> [on=cond] [r=N] [seed=S]")?;
            let r = a.number("r")?;
            if r == Some(0) {
                return Err(Error::InvalidArgument("r must be positive".into()));
            }
            Ok(Command::Join {
                node: p[0].clone(),
                left: p[1].clone(),
                right: p[2].clone(),
                condition: JoinCondition::parse(a.get("on").unwrap_or(""))?,
                r,
                seed: a.number("seed")?,
            })
        }
        "dedup" => {
            let a = Args::split(rest, &[], &[])?;
            let p = a.positional(2, "dedup <node> <parent>")?;
            Ok(Command::Dedup {
                node: p[0].clone(),
                parent: p[1].clone(),
            })
        }
        "view" => {
            let a = Args::split(rest, &["cols", "offset", "limit", "out"], &[])?;
            let p = a.positional(1, "view <node> [cols=..] [offset=N] [limit=N] [out=file]")?;
            let full = a.get("cols") == Some("full");
            Ok(Command::View {
                node: p[0].clone(),
                columns: a.get("cols").filter(|_| !full).map(list),
                full,
                offset: a.number("offset")?.unwrap_or(0),
                limit: a.number("limit")?,
                out: a.get("out").map(PathBuf::from),
            })
        }
        "analyze" => {
            let a = Args::split(rest, &["group", "agg", "where", "spec", "bootstrap", "out"], &[])?;
            let p = a.positional(1, "analyze <node> [group=..] [agg=..] [where=..] [spec=file] [bootstrap=B:seed] [out=file]")?;
            let mut spec = match a.get("spec") {
                Some(f) => serde_json::from_str(&read(&path(f))?)?,
                None => AnalysisSpec::default(),
            };
            if let Some(g) = a.get("group") {
                spec.group.extend(list(g));
            }
            if let Some(g) = a.get("agg") {
                for s in list(g) {
                    spec.aggregates.push(parse_aggregate(&s)?);
                }
            }
            for w in a.all("where") {
                spec.filters.push(parse_filter(w)?);
            }
            if let Some(b) = a.get("bootstrap") {
                let (n, seed) = b.split_once(':').unwrap_or((b, "0"));
                let bad = || Error::InvalidAnalysis(format!("bootstrap needs B:seed, got `{b}`"));
                spec.bootstrap = Some(Bootstrap {
                    resamples: n.parse().map_err(|_| bad())?,
                    seed: seed.parse().map_err(|_| bad())?,
                });
            }
            if spec.aggregates.is_empty() {
                spec.aggregates.push(Aggregate::count());
            }
            Ok(Command::Analyze {
                node: p[0].clone(),
                spec,
                out: a.get("out").map(PathBuf::from),
            })
        }
        "tree" => {
            let a = Args::split(rest, &["out"], &[])?;
            a.positional(0, "tree [out=file]")?;
            Ok(Command::Tree {
                out: a.get("out").map(PathBuf::from),
            })
        }
        "save" => {
            let a = Args::split(rest, &[], &[])?;
            let p = a.positional(1, "save <dir>")?;
            Ok(Command::Save { dir: path(&p[0]) })
        }
        other => Err(Error::InvalidArgument(format!("unknown command `{other}`"))),
    }
}

/// Parses one line; `None` for blank and comment lines.
pub fn parse_line(number: usize, text: &str, base: &Path, config: &Config) -> std::result::Result<Option<Line>, ScriptError> {
    let wrap = |error| ScriptError {
        line: number,
        command: text.trim().to_string(),
        error,
    };
    let tokens = tokenize(strip_comment(text)).map_err(wrap)?;
    if tokens.is_empty() {
        return Ok(None);
    }
    let command = parse_command(&tokens, base, config).map_err(wrap)?;
    Ok(Some(Line {
        number,
        text: text.trim().to_string(),
        command,
    }))
}

impl Script {
    /// Parses every line, reading referenced query and spec files relative to `base`.
    pub fn parse(text: &str, base: &Path, config: &Config) -> std::result::Result<Self, ScriptError> {
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if let Some(l) = parse_line(i + 1, raw, base, config)? {
                lines.push(l);
            }
        }
        Ok(Script { lines })
    }

    pub fn from_file(path: &Path, config: &Config) -> std::result::Result<Self, ScriptError> {
        let text = read(path).map_err(|error| ScriptError {
            line: 0,
            command: path.display().to_string(),
            error,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), config)
    }
}

/// Executes commands against one session, mapping script node names to ids.
pub struct Runner {
    pub session: Session,
    names: HashMap<String, NodeId>,
    out_dir: PathBuf,
    /// Files written so far, in order.
    pub written: Vec<PathBuf>,
}

impl Runner {
    pub fn new(session: Session, out_dir: impl Into<PathBuf>) -> Self {
        Runner {
            session,
            names: HashMap::new(),
            out_dir: out_dir.into(),
            written: Vec::new(),
        }
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    /// Dry run: every reference must resolve to a graph or node defined
    /// earlier (in the script or the session) and node names are unique.
    pub fn validate(&self, script: &Script) -> std::result::Result<(), ScriptError> {
        let mut graphs: BTreeSet<String> = self.session.graph_names().into_iter().map(String::from).collect();
        let mut nodes: BTreeSet<String> = self.names.keys().cloned().collect();
        for line in &script.lines {
            let fail = |error| ScriptError {
                line: line.number,
                command: line.text.clone(),
                error,
            };
            if let Command::Load { graph, .. } = &line.command {
                graphs.insert(graph.clone());
            }
            if let Command::Source { graph, .. } = &line.command {
                if !graphs.contains(graph) {
                    return Err(fail(Error::UnknownGraph(graph.clone())));
                }
            }
            for u in line.command.uses() {
                if !nodes.contains(u) {
                    return Err(fail(Error::InvalidArgument(format!("node `{u}` is not defined before use"))));
                }
            }
            if let Some(d) = line.command.defines() {
                if !nodes.insert(d.to_string()) {
                    return Err(fail(Error::InvalidArgument(format!("node `{d}` is defined twice"))));
                }
            }
        }
        Ok(())
    }

    /// Validates the whole script, then executes it line by line. Returns
    /// the progress messages; on error, earlier commands stay applied.
    pub fn run(&mut self, script: &Script) -> std::result::Result<Vec<String>, ScriptError> {
        self.validate(script)?;
        let mut log = Vec::new();
        for line in &script.lines {
            log.push(self.execute(line)?);
        }
        Ok(log)
    }

    fn resolve(&self, name: &str) -> Result<NodeId> {
        self.node_id(name)
            .ok_or_else(|| Error::InvalidArgument(format!("node `{name}` is not defined")))
    }

    fn emit(&mut self, out: &Option<PathBuf>, body: String) -> Result<String> {
        match out {
            None => Ok(body),
            Some(p) => {
                let path = self.out_dir.join(p);
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir).map_err(|e| Error::Io {
                        path: dir.to_path_buf(),
                        source: e,
                    })?;
                }
                fs::write(&path, &body).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                self.written.push(path.clone());
                Ok(format!("wrote {}", path.display()))
            }
        }
    }

    fn derive(&mut self, node: &str, op: Operator, parents: &[NodeId]) -> Result<String> {
        let outcome = self.session.derive(op, parents)?;
        self.names.insert(node.to_string(), outcome.node_id);
        let n = self.session.node(outcome.node_id)?;
        let mut msg = format!(
            "{node} = node {}: {} hyperedges, scale factor {}",
            outcome.node_id, n.hyperedge_count, n.scale_factor
        );
        if let Some(s) = outcome.seed {
            msg.push_str(&format!(", seed {s}"));
        }
        if outcome.reused {
            msg.push_str(" (reused)");
        }
        Ok(msg)
    }

    /// Runs one parsed line.
    pub fn execute(&mut self, line: &Line) -> std::result::Result<String, ScriptError> {
        self.execute_command(&line.command).map_err(|error| ScriptError {
            line: line.number,
            command: line.text.clone(),
            error,
        })
    }

    fn execute_command(&mut self, command: &Command) -> Result<String> {
        match command {
            Command::Load { graph, files } => {
                let g = self.session.load_graph(graph, files)?;
                Ok(format!("{graph}: {} vertices, {} edges", g.vertex_count(), g.edge_count()))
            }
            Command::Source {
                node,
                graph,
                query,
                trials,
                seed,
                dedup,
            } => {
                let op = Operator::Source {
                    graph: graph.clone(),
                    query: query.clone(),
                    trials: *trials,
                    seed: *seed,
                    dedup: *dedup,
                };
                self.derive(node, op, &[])
            }
            Command::Join {
                node,
                left,
                right,
                condition,
                r,
                seed,
            } => {
                let parents = [self.resolve(left)?, self.resolve(right)?];
                let op = Operator::Join {
                    condition: condition.clone(),
                    r: *r,
                    seed: *seed,
                };
                self.derive(node, op, &parents)
            }
            Command::Dedup { node, parent } => {
                let p = self.resolve(parent)?;
                self.derive(node, Operator::Dedup, &[p])
            }
            Command::View {
                node,
                columns,
                full,
                offset,
                limit,
                out,
            } => {
                let id = self.resolve(node)?;
                let cols = if *full {
                    Some(full_columns(&*self.session.hypergraph(id)?))
                } else {
                    columns.clone()
                };
                let limit = limit.unwrap_or(if out.is_some() { usize::MAX } else { DEFAULT_PRINT_ROWS });
                let v = self.session.view(id, cols.as_deref(), *offset, limit)?;
                self.emit(out, v.to_csv())
            }
            Command::Analyze { node, spec, out } => {
                let id = self.resolve(node)?;
                let t = self.session.analyze(id, spec)?;
                let body = render_table(&t, out.as_deref());
                self.emit(out, body)
            }
            Command::Tree { out } => {
                let tree = serde_json::json!({ "nodes": self.session.list_tree() });
                let body = serde_json::to_string_pretty(&tree)?;
                self.emit(out, body)
            }
            Command::Save { dir } => {
                self.session.save(dir)?;
                Ok(format!("saved session to {}", dir.display()))
            }
        }
    }
}

/// JSON for `.json` targets, CSV otherwise.
pub fn render_table(t: &ResultTable, out: Option<&Path>) -> String {
    match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => t.to_json(),
        _ => t.to_csv(),
    }
}
