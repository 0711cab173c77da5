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

//! Forms a group of five over the simulated channel and chats.
//!
//! Prints every packet the server relayed during the agreement, the
//! notices one member observed and the resulting shared transcript.

use mpenc::liveness::FlowPolicy;
use mpenc::session::{Notice, OpOutcome};
use mpenc::simchannel::SimServer;
use mpenc::types::ids;

fn main() {
    let m = ids(["ana", "ben", "cat", "dan", "eve"]);
    let mut sim = SimServer::with_channel(&m, 2026, FlowPolicy::default());
    sim.step();

    let done = sim.propose(&m[0], &m[1..], &[]).expect("proposal");
    sim.run_for(20);
    match done.get() {
        Some(OpOutcome::Succeeded { members }) => println!("group formed: {members:?}"),
        other => panic!("agreement did not finish: {other:?}"),
    }
    for p in sim.packet_log() {
        println!(
            "  t={:<3} {:<4} {:<8} {}",
            p.at,
            p.from,
            p.kind,
            p.stage.as_deref().unwrap_or("")
        );
    }

    sim.send(&m[1], "hi all").unwrap();
    sim.run_for(2);
    sim.send(&m[3], "hello ben").unwrap();
    assert!(sim.settle(200));

    println!("notices at {}:", m[4]);
    for (t, n) in sim.notices(&m[4]) {
        match n {
            Notice::MessageAccepted { author, text, .. } => println!("  t={t:<3} {author}: {text}"),
            other => println!("  t={t:<3} {}", serde_json::to_string(other).unwrap()),
        }
    }
    let key = sim.session(&m[0]).current_keys().group_key;
    assert!(m
        .iter()
        .all(|w| sim.session(w).current_keys().group_key == key));
    println!("shared key {}", hex::encode(key));
}
