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

//! Subscribes to a session's notices and shuts the session down cleanly.

use std::cell::RefCell;
use std::rc::Rc;

use mpenc::liveness::FlowPolicy;
use mpenc::session::Notice;
use mpenc::simchannel::SimServer;
use mpenc::types::ids;

fn main() {
    let m = ids(["one", "two", "three"]);
    let mut sim = SimServer::with_channel(&m, 8, FlowPolicy::default());

    let seen = Rc::new(RefCell::new(Vec::new()));
    let sink = Rc::clone(&seen);
    let sub = sim.session(&m[2]).subscribe(move |n: &Notice| {
        sink.borrow_mut()
            .push(serde_json::to_string(n).expect("notice serialises"));
    });

    sim.step();
    sim.propose(&m[0], &m[1..], &[]).unwrap();
    sim.run_for(10);
    sim.send(&m[1], "see you").unwrap();
    sim.settle(200);
    sim.shutdown(&m[0]).unwrap();
    sim.settle(400);
    sub.cancel();
    sim.send(&m[1], "unheard by the subscriber").unwrap();
    sim.settle(200);

    for line in seen.borrow().iter() {
        println!("{line}");
    }
    println!("one still in channel: {}", sim.channel().contains(&m[0]));
}
