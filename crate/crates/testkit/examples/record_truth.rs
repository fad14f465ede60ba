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

//! Prints the summary line stored in `fixtures/v1/generated`.

use hyperbi_core::load_graph;
use hyperbi_testkit::generate::{write_instance, InstanceParams};
use hyperbi_testkit::oracles::triangle_count;

fn main() {
    let dir = std::env::temp_dir().join("hyperbi-record-truth");
    let inst = write_instance(&dir, "tri", &InstanceParams::gnp(2000, 0.01, 1)).expect("instance writes");
    let g = load_graph("tri", &inst.files).expect("instance loads");
    let doc = serde_json::json!({
        "n": 2000,
        "p": 0.01,
        "seed": 1,
        "edges": inst.summary.edges,
        "triangles": triangle_count(&g),
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
}
