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

//! Fixtures, seeded instance generation and brute-force oracles for tests.
//!
//! Oracles here deliberately avoid the engine's matcher, join and
//! aggregation code paths; they only read graphs through public accessors.

pub mod fixtures;
pub mod generate;
pub mod oracles;
pub mod stats;
