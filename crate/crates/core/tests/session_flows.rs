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

use mpenc::liveness::FlowPolicy;
use mpenc::session::{Notice, OpOutcome};
use mpenc::simchannel::{Fault, PacketFilter, SimServer};
use mpenc::types::ids;
use mpenc::{UserId, WarningCode};

fn established(names: &[&str], seed: u64) -> (SimServer, Vec<UserId>) {
    let m = ids(names.iter().copied());
    let mut sim = SimServer::with_channel(&m, seed, FlowPolicy::default());
    sim.step();
    let h = sim.propose(&m[0], &m[1..], &[]).unwrap();
    sim.run_for(3 * m.len() as u64);
    assert!(
        matches!(h.get(), Some(OpOutcome::Succeeded { .. })),
        "{:?}",
        h.get()
    );
    (sim, m)
}

fn warnings(sim: &SimServer, who: &UserId) -> Vec<WarningCode> {
    sim.notices(who)
        .iter()
        .filter_map(|(_, n)| match n {
            Notice::SecurityWarning { code, .. } => Some(*code),
            _ => None,
        })
        .collect()
}

fn agree(sim: &SimServer, who: &[UserId]) {
    let k = sim.session(&who[0]).current_keys();
    for w in who {
        let s = sim.session(w).current_keys();
        assert_eq!(s.sid, k.sid, "sid of {w}");
        assert_eq!(s.group_key, k.group_key, "group key of {w}");
        assert_eq!(s.members, k.members, "members of {w}");
    }
}

#[test]
fn include_then_exclude() {
    let (mut sim, m) = established(&["alice", "bob", "carol", "dave"], 11);
    let all = m.clone();
    let three = &m[..3];
    let before = sim.session(&m[0]).current_keys().clone();
    sim.propose(&m[0], &[], &m[3..]).unwrap();
    sim.run_for(20);
    agree(&sim, three);
    assert_eq!(sim.session(&m[0]).members(), three);
    assert!(
        !sim.channel().contains(&m[3]),
        "excluded member should be kicked"
    );
    assert!(sim.session(&m[3]).is_solo());
    assert_ne!(
        sim.session(&m[0]).current_keys().group_key,
        before.group_key
    );

    sim.join(&m[3]);
    sim.step();
    sim.step();
    let h = sim.propose(&m[1], &m[3..], &[]).unwrap();
    sim.run_for(20);
    assert!(
        matches!(h.get(), Some(OpOutcome::Succeeded { .. })),
        "{:?}",
        h.get()
    );
    agree(&sim, &all);
    sim.send(&m[3], "back again").unwrap();
    assert!(sim.settle(200));
    for w in &all {
        assert!(warnings(&sim, w).is_empty(), "{w}: {:?}", warnings(&sim, w));
    }
}

#[test]
fn refresh_changes_key_keeps_members() {
    let (mut sim, m) = established(&["a", "b", "c"], 5);
    let k0 = sim.session(&m[0]).current_keys().group_key;
    sim.propose(&m[2], &[], &[]).unwrap();
    sim.run_for(10);
    agree(&sim, &m);
    assert_ne!(sim.session(&m[0]).current_keys().group_key, k0);
    assert!(sim.settle(200));
}

#[test]
fn concurrent_proposals_one_wins() {
    let (mut sim, m) = established(&["a", "b", "c", "d"], 9);
    let h1 = sim.propose(&m[0], &[], &[]).unwrap();
    let h2 = sim.propose(&m[2], &[], &m[3..]).unwrap();
    sim.run_for(30);
    let ok = |h: &mpenc::observable::Completion<OpOutcome>| {
        matches!(h.get(), Some(OpOutcome::Succeeded { .. }))
    };
    assert!(ok(&h1) ^ ok(&h2), "{:?} {:?}", h1.get(), h2.get());
    assert!(matches!(h2.get(), Some(OpOutcome::Rejected { .. })));
    agree(&sim, &m);
    let ch = sim.session(&m[0]).chain_hash();
    for w in &m {
        assert_eq!(sim.session(w).chain_hash(), ch);
    }
}

#[test]
fn dropped_ack_warns_then_recovers() {
    let (mut sim, m) = established(&["alice", "bob"], 2);
    sim.add_fault(Fault::Drop {
        from: m[1].clone(),
        to: Some(m[0].clone()),
        filter: PacketFilter::Data,
        nth: 1,
    });
    sim.send(&m[0], "ping").unwrap();
    sim.run_for(40);
    assert!(warnings(&sim, &m[0]).contains(&WarningCode::FullAckTimeout));
    assert!(sim.settle(200));
    assert!(sim.session(&m[0]).unacked().is_empty());
}

#[test]
fn leaver_is_excluded_automatically() {
    let (mut sim, m) = established(&["a", "b", "c"], 4);
    sim.disconnect(&m[..1]);
    sim.run_for(20);
    agree(&sim, &m[1..]);
    assert_eq!(sim.session(&m[1]).members(), &m[1..]);
}

#[test]
fn formal_shutdown_leaves_channel() {
    let (mut sim, m) = established(&["a", "b", "c"], 8);
    sim.send(&m[1], "bye soon").unwrap();
    sim.run_for(5);
    sim.shutdown(&m[1]).unwrap();
    sim.run_for(40);
    assert!(!sim.channel().contains(&m[1]));
    assert_eq!(sim.session(&m[0]).members(), &[m[0].clone(), m[2].clone()]);
    for w in &m {
        assert!(
            !warnings(&sim, w).contains(&WarningCode::ShutdownIncomplete),
            "{w}"
        );
    }
}
