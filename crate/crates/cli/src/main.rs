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

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperbi::config::Config;
use hyperbi::script::{parse_line, Runner, Script, ScriptError};
use hyperbi::server;
use hyperbi_core::session::Session;
use hyperbi_core::{load_graph, GraphFiles};

#[derive(Parser)]
#[command(name = "hyperbi", version, about = "Hypergraph exploration engine")]
struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load and validate a property graph, then print a summary.
    Load {
        #[arg(long = "vertices", required = true, value_delimiter = ',')]
        vertices: Vec<PathBuf>,
        #[arg(long = "edges", value_delimiter = ',')]
        edges: Vec<PathBuf>,
        #[arg(long, default_value = "G")]
        name: String,
    },
    /// Read commands from standard input, one per line.
    Repl,
    /// Validate then execute a script.
    Run {
        script: PathBuf,
        /// Directory for `out=` files (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Persist the session to this directory as it runs.
        #[arg(long)]
        session_dir: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

fn fail(message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": { "code": "cli", "message": message } }));
    ExitCode::FAILURE
}

fn script_failure(e: &ScriptError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::FAILURE
}

fn new_session(config: &Config, dir: Option<&Path>) -> hyperbi_core::Result<Session> {
    let s = match dir {
        Some(d) => Session::persistent("cli", d)?,
        None => Session::new("cli"),
    };
    Ok(s.with_config(config.session_config()))
}

fn repl(config: &Config) -> ExitCode {
    let session = match new_session(config, None) {
        Ok(s) => s,
        Err(e) => return fail(&e.to_string()),
    };
    let mut runner = Runner::new(session, ".");
    let stdin = io::stdin();
    let mut failed = false;
    for (i, line) in stdin.lock().lines().enumerate() {
        let Ok(line) = line else { break };
        let step = parse_line(i + 1, &line, Path::new("."), config).and_then(|parsed| {
            let Some(parsed) = parsed else { return Ok(None) };
            let one = Script { lines: vec![parsed] };
            runner.validate(&one)?;
            runner.execute(&one.lines[0]).map(Some)
        });
        match step {
            Ok(Some(msg)) => println!("{msg}"),
            Ok(None) => {}
            Err(e) => {
                failed = true;
                eprintln!("{}", e.to_json());
            }
        }
        let _ = io::stdout().flush();
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(p) => match Config::load(p) {
            Ok(c) => c,
            Err(e) => return fail(&e.to_string()),
        },
        None => Config::default(),
    };
    match cli.command {
        Cmd::Load { vertices, edges, name } => {
            let files = GraphFiles {
                vertex_files: vertices,
                edge_files: edges,
            };
            match load_graph(&name, &files) {
                Ok(g) => {
                    println!("{name}: {} vertices, {} edges", g.vertex_count(), g.edge_count());
                    for (label, n) in g.vertex_labels() {
                        println!("  {label}: {n}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e.to_string()),
            }
        }
        Cmd::Repl => repl(&config),
        Cmd::Run { script, out, session_dir } => {
            let parsed = match Script::from_file(&script, &config) {
                Ok(s) => s,
                Err(e) => return script_failure(&e),
            };
            let session = match new_session(&config, session_dir.as_deref()) {
                Ok(s) => s,
                Err(e) => return fail(&e.to_string()),
            };
            let mut runner = Runner::new(session, out.unwrap_or_else(|| PathBuf::from(".")));
            match runner.run(&parsed) {
                Ok(log) => {
                    for l in log {
                        println!("{l}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => script_failure(&e),
            }
        }
        Cmd::Serve { port } => {
            if let Some(p) = port {
                config.port = p;
            }
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => return fail(&e.to_string()),
            };
            match rt.block_on(server::serve(config)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e.to_string()),
            }
        }
    }
}
