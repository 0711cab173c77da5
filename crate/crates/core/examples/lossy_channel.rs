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

//! Chat over a channel that loses a fifth of all data packets.
//!
//! Lost messages and acknowledgements are recovered by resends once a
//! member notices that a reader is behind. The run prints the warnings
//! each member raised while the loss lasted and confirms that every
//! transcript converges after it stops.

use mpenc::liveness::FlowPolicy;
use mpenc::session::Notice;
use mpenc::simchannel::{Fault, PacketFilter, SimServer};
use mpenc::types::ids;

fn main() {
    let m = ids(["u1", "u2", "u3", "u4"]);
    let mut sim = SimServer::with_channel(&m, 99, FlowPolicy::default());
    sim.step();
    sim.propose(&m[0], &m[1..], &[]).unwrap();
    sim.run_for(20);

    let until = sim.now() + 80;
    sim.add_fault(Fault::Loss {
        rate: 0.2,
        from: None,
        filter: PacketFilter::Data,
        until: Some(until),
    });
    for i in 0..12 {
        sim.send(&m[i % m.len()], &format!("message {i}")).unwrap();
        sim.run_for(5);
    }
    let converged = |sim: &SimServer| {
        let g = sim.session(&m[0]).transcript().graph();
        sim.is_quiet() && m.iter().all(|w| sim.session(w).transcript().graph() == g)
    };
    let mut ticks = 0;
    while !converged(&sim) && ticks < 1000 {
        sim.step();
        ticks += 1;
    }
    println!(
        "converged {ticks} ticks after the last send (t={})",
        sim.now()
    );

    for w in &m {
        let codes: Vec<String> = sim
            .notices(w)
            .iter()
            .filter_map(|(t, n)| match n {
                Notice::SecurityWarning { code, members, .. } => {
                    Some(format!("t={t} {code:?}{members:?}"))
                }
                _ => None,
            })
            .collect();
        let t = sim.session(w).transcript();
        let texts = t.messages().filter(|msg| msg.text().is_some()).count();
        println!("{w}: {texts} messages, warnings {codes:?}");
    }
    assert!(converged(&sim));
    println!(
        "all transcripts equal ({} nodes)",
        sim.session(&m[0]).transcript().len()
    );
}
