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

//! Includes, excludes and refreshes, then checks who can read what.
//!
//! Each operation starts a new subsession with a new key. A member's key
//! history only covers subsessions it belonged to, so a late joiner cannot
//! decrypt earlier traffic and an excluded member cannot decrypt later
//! traffic.

use mpenc::liveness::FlowPolicy;
use mpenc::message_security::verify_decrypt;
use mpenc::session::OpOutcome;
use mpenc::simchannel::SimServer;
use mpenc::types::ids;
use mpenc::UserId;

fn op(sim: &mut SimServer, by: &UserId, include: &[UserId], exclude: &[UserId]) {
    let h = sim.propose(by, include, exclude).expect("proposal");
    sim.run_for(30);
    let Some(OpOutcome::Succeeded { members }) = h.get() else {
        panic!("{:?}", h.get())
    };
    let key = sim.session(by).current_keys().group_key;
    println!(
        "{by} +{include:?} -{exclude:?} -> {members:?} key {}",
        &hex::encode(key)[..12]
    );
}

/// Of `author`'s data packets under its current key, how many `who` can
/// decrypt with its whole key history.
fn readable(sim: &SimServer, who: &UserId, author: &UserId) -> (usize, usize) {
    let current = sim.session(author).current_keys();
    let history: Vec<_> = sim.session(who).key_history().iter().collect();
    let sent: Vec<_> = sim
        .packet_log()
        .iter()
        .filter(|p| p.kind == "data" && &p.from == author)
        .filter(|p| verify_decrypt(&[current], &p.packet, author).is_ok())
        .collect();
    let ok = sent
        .iter()
        .filter(|p| verify_decrypt(&history, &p.packet, author).is_ok())
        .count();
    (ok, sent.len())
}

fn earlier(sim: &SimServer, who: &UserId, author: &UserId) -> usize {
    let history: Vec<_> = sim.session(who).key_history().iter().collect();
    sim.packet_log()
        .iter()
        .filter(|p| p.kind == "data" && &p.from == author)
        .filter(|p| verify_decrypt(&history, &p.packet, author).is_ok())
        .count()
}

fn main() {
    let m = ids(["amy", "bo", "cy", "di"]);
    let mut sim = SimServer::with_channel(&m, 3, FlowPolicy::default());
    sim.step();
    op(&mut sim, &m[0], &m[1..3], &[]);

    sim.send(&m[0], "before di").unwrap();
    sim.settle(200);
    let before = earlier(&sim, &m[1], &m[0]);
    op(&mut sim, &m[1], &m[3..], &[]);
    println!(
        "bo reads {before} of amy's packets sent before di joined, di reads {}",
        earlier(&sim, &m[3], &m[0])
    );

    op(&mut sim, &m[2], &[], &[]);
    op(&mut sim, &m[3], &[], &m[1..2]);
    sim.send(&m[0], "after bo").unwrap();
    sim.settle(200);
    for who in [&m[1], &m[3]] {
        let (ok, n) = readable(&sim, who, &m[0]);
        println!("{who} reads {ok} of {n} packets amy sent after bo left");
    }
    println!("bo still in channel: {}", sim.channel().contains(&m[1]));
}
