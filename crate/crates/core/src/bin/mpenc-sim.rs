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

//! `mpenc-sim run <scenario.json>`: runs a scenario on the simulated channel,
//! prints the JSON report on stdout and a trace on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use mpenc::cli::{dump_dot, dump_transcripts, run_file, RunOptions, RunOutput, EXIT_SCHEMA};

#[derive(Parser)]
#[command(
    name = "mpenc-sim",
    version,
    about = "Run group messaging scenarios on a simulated channel"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        file: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Leave the generation time out of the report.
        #[arg(long)]
        no_timestamp: bool,
        /// Write each member's message log to DIR/MEMBER.json.
        #[arg(long, value_name = "DIR")]
        dump_transcripts: Option<PathBuf>,
        /// Write each member's causal graph to DIR/MEMBER.dot.
        #[arg(long, value_name = "DIR")]
        dot: Option<PathBuf>,
    },
}

type Dump = fn(&RunOutput, &Path) -> std::io::Result<()>;

fn main() -> ExitCode {
    let Args {
        command:
            Command::Run {
                file,
                seed,
                no_timestamp,
                dump_transcripts: transcripts,
                dot,
            },
    } = Args::parse();
    let timestamp = (!no_timestamp).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    let out = match run_file(&file, &RunOptions { seed, timestamp }) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    for line in &out.trace {
        eprintln!("{line}");
    }
    let dumps: [(Option<PathBuf>, Dump); 2] = [(transcripts, dump_transcripts), (dot, dump_dot)];
    for (dir, write) in dumps {
        if let Some(dir) = dir {
            if let Err(e) = write(&out, &dir) {
                eprintln!("error: cannot write {}: {e}", dir.display());
                return ExitCode::from(EXIT_SCHEMA as u8);
            }
        }
    }
    print!("{}", out.report.to_json());
    ExitCode::from(out.report.exit_code() as u8)
}
