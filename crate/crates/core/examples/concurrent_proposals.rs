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

//! Three members propose membership changes at the same moment.
//!
//! The server's order decides: the first initial packet it relays wins,
//! the others are rejected at every member, and everyone ends up with the
//! same membership, key and chain hash.

use mpenc::liveness::FlowPolicy;
use mpenc::session::Notice;
use mpenc::simchannel::SimServer;
use mpenc::types::ids;

fn main() {
    let m = ids(["p", "q", "r", "s", "t"]);
    let mut sim = SimServer::with_channel(&m, 17, FlowPolicy::default());
    sim.step();
    sim.propose(&m[0], &m[1..4], &[]).unwrap();
    sim.run_for(20);

    let handles = [
        ("q includes t", sim.propose(&m[1], &m[4..], &[]).unwrap()),
        ("r excludes s", sim.propose(&m[2], &[], &m[3..4]).unwrap()),
        ("s refreshes", sim.propose(&m[3], &[], &[]).unwrap()),
    ];
    sim.run_for(40);
    for (label, h) in &handles {
        println!("{label:<14} {}", serde_json::to_string(&h.get()).unwrap());
    }

    for (t, n) in sim.notices(&m[0]) {
        if let Notice::OperationRejected {
            initiator, cause, ..
        } = n
        {
            println!("p saw t={t}: proposal by {initiator} rejected ({cause})");
        }
    }
    let members = sim.session(&m[1]).members().to_vec();
    let chain = sim.session(&m[1]).chain_hash();
    for w in &members {
        assert_eq!(sim.session(w).chain_hash(), chain);
    }
    println!("members {members:?}, chain {}", &hex::encode(chain)[..16]);
}
