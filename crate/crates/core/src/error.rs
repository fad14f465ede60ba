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

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the service layer to pick a status code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    Engine,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate vertex id {id} in graph `{graph}`")]
    DuplicateVertex { graph: String, id: i64 },
    #[error("edge ({src}, {dst}) in graph `{graph}` references missing vertex {missing}")]
    MissingVertex {
        graph: String,
        src: i64,
        dst: i64,
        missing: i64,
    },
    #[error("duplicate edge between {a} and {b} in graph `{graph}`")]
    DuplicateEdge { graph: String, a: i64, b: i64 },
    #[error("self loop on vertex {id} in graph `{graph}`")]
    SelfLoop { graph: String, id: i64 },
    #[error("unknown vertex {id} in graph `{graph}`")]
    UnknownVertex { graph: String, id: i64 },
    #[error("no edge between {a} and {b} in graph `{graph}`")]
    UnknownEdge { graph: String, a: i64, b: i64 },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("unknown label `{label}` in graph `{graph}`")]
    UnknownLabel { graph: String, label: String },
    #[error("query has {0} vertices; automorphism search supports at most 12")]
    QueryTooLarge(usize),
    #[error("match limit of {0} exceeded")]
    LimitExceeded(usize),
    #[error("memory budget of {budget} bytes exceeded while materializing matches")]
    MemoryBudgetExceeded { budget: usize },
    #[error("tree-embedding weight overflowed 128 bits")]
    WeightOverflow,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid join condition: {0}")]
    InvalidJoin(String),
    #[error("invalid analysis: {0}")]
    InvalidAnalysis(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown node {0}")]
    UnknownNode(u64),
    #[error("unknown graph `{0}`")]
    UnknownGraph(String),
    #[error("missing dependency: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("unsupported session format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("session was modified concurrently (expected version {expected}, found {found})")]
    Conflict { expected: u64, found: u64 },
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::UnknownNode(_) | Error::UnknownGraph(_) => ErrorKind::NotFound,
            Error::Conflict { .. } => ErrorKind::Conflict,
            Error::Parse { .. }
            | Error::TypeMismatch(_)
            | Error::InvalidQuery(_)
            | Error::UnknownLabel { .. }
            | Error::UnknownColumn(_)
            | Error::InvalidJoin(_)
            | Error::InvalidAnalysis(_)
            | Error::InvalidArgument(_)
            | Error::UnknownVertex { .. }
            | Error::UnknownEdge { .. }
            | Error::QueryTooLarge(_) => ErrorKind::Validation,
            _ => ErrorKind::Engine,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::DuplicateVertex { .. } => "duplicate_vertex",
            Error::MissingVertex { .. } => "missing_vertex",
            Error::DuplicateEdge { .. } => "duplicate_edge",
            Error::SelfLoop { .. } => "self_loop",
            Error::UnknownVertex { .. } => "unknown_vertex",
            Error::UnknownEdge { .. } => "unknown_edge",
            Error::TypeMismatch(_) => "type_mismatch",
            Error::InvalidQuery(_) => "invalid_query",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::QueryTooLarge(_) => "query_too_large",
            Error::LimitExceeded(_) => "limit_exceeded",
            Error::MemoryBudgetExceeded { .. } => "memory_budget_exceeded",
            Error::WeightOverflow => "weight_overflow",
            Error::UnknownColumn(_) => "unknown_column",
            Error::InvalidJoin(_) => "invalid_join",
            Error::InvalidAnalysis(_) => "invalid_analysis",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnknownNode(_) => "unknown_node",
            Error::UnknownGraph(_) => "unknown_graph",
            Error::MissingFile(_) => "missing_file",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Conflict { .. } => "conflict",
            Error::Serde(_) => "serde",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingFile(path.into());
        }
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
