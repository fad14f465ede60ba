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

//! Hypergraph-based exploratory analytics over property graphs.
//!
//! Query graphs are matched into property graphs (exactly or by uniform
//! sampling) to form hypergraphs, hypergraphs are joined, projected to
//! tables and aggregated with scale-corrected estimators.

pub mod analysis;
pub mod error;
pub mod graph;
pub mod hypergraph;
pub mod join;
pub mod matcher;
pub mod query;
pub mod rng;
pub mod session;
pub mod value;
pub mod view;

pub use error::{Error, ErrorKind, Result};
pub use graph::{load_graph, GraphBuilder, GraphFiles, PropertyGraph, VertexId};
pub use query::{CompareOp, Predicate, QueryGraph};
pub use value::{PropertyType, PropertyValue};
