// Copyright 2026 The mpenc-rs Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Runs a scenario file through the library API instead of the CLI.
//!
//! Usage: `cargo run --example run_scenario -- [path] [seed]`. Without a
//! path the bundled `include-exclude` scenario is used.

use std::path::PathBuf;

use mpenc::cli::{self, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/include-exclude.json")
    });
    let seed = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"));

    let out = match cli::run_file(
        &path,
        &RunOptions {
            seed,
            timestamp: None,
        },
    ) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            std::process::exit(e.exit_code());
        }
    };
    for line in &out.trace {
        println!("{line}");
    }
    let r = &out.report;
    println!(
        "{}: seed {} ticks {} packets {}+{} -> {}",
        r.scenario,
        r.seed,
        r.ticks,
        r.packets.greeting,
        r.packets.data,
        if r.passed { "passed" } else { "failed" }
    );
    std::process::exit(r.exit_code());
}
