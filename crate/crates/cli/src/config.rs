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

//! `key=value` configuration file with `#` comments.

use std::path::{Path, PathBuf};

use hyperbi_core::analysis::AnalysisOptions;
use hyperbi_core::matcher::ExactConfig;
use hyperbi_core::session::SessionConfig;
use hyperbi_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Cap on bytes of materialized exact matchings, if any.
    pub memory_budget: Option<usize>,
    /// Trial budget used when a sampled source gives no explicit count.
    pub default_trials: u64,
    pub tdigest_delta: usize,
    /// Sessions live under `<persistence_root>/sessions/<id>`.
    pub persistence_root: PathBuf,
    pub port: u16,
    pub lazy_row_threshold: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            memory_budget: None,
            default_trials: 100_000,
            tdigest_delta: 100,
            persistence_root: PathBuf::from("hyperbi-data"),
            port: 8080,
            lazy_row_threshold: 1_000_000,
        }
    }
}

/// Byte sizes accept a `K`, `M` or `G` suffix (powers of 1024).
fn parse_bytes(raw: &str) -> Option<usize> {
    let raw = raw.trim();
    let (digits, mult) = match raw.chars().last()?.to_ascii_uppercase() {
        'K' => (&raw[..raw.len() - 1], 1usize << 10),
        'M' => (&raw[..raw.len() - 1], 1 << 20),
        'G' => (&raw[..raw.len() - 1], 1 << 30),
        _ => (raw, 1),
    };
    digits.trim().parse::<usize>().ok()?.checked_mul(mult)
}

impl Config {
    /// Parses config text. Relative `persistence_root` values resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: "config".into(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("`{key}` needs a number")));
            match key {
                "memory_budget" => {
                    c.memory_budget = Some(parse_bytes(value).ok_or_else(|| bad(format!("bad byte size `{value}`")))?)
                }
                "default_trials" => c.default_trials = num(value)?,
                "tdigest_delta" => c.tdigest_delta = num(value)? as usize,
                "persistence_root" => c.persistence_root = base.join(value),
                "port" => c.port = u16::try_from(num(value)?).map_err(|_| bad("port out of range".into()))?,
                "lazy_row_threshold" => c.lazy_row_threshold = num(value)? as usize,
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        if c.default_trials == 0 || c.tdigest_delta == 0 {
            return Err(Error::InvalidArgument("default_trials and tdigest_delta must be positive".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            exact: ExactConfig {
                memory_budget_bytes: self.memory_budget,
                ..Default::default()
            },
            lazy_row_threshold: self.lazy_row_threshold,
            analysis: AnalysisOptions {
                tdigest_delta: self.tdigest_delta,
            },
        }
    }
}
