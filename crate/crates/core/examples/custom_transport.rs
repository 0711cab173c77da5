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

//! Embeds [`Session`] behind a hand-written transport.
//!
//! The session never touches the network or a clock. This example keeps a
//! tiny ordered broadcast server: packets travel as `?mpENC:` text, every
//! channel member (the sender too) receives them in one global order, and
//! the logical clock advances one tick per round.

use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;

use mpenc::codec::WirePacket;
use mpenc::identity::Directory;
use mpenc::liveness::FlowPolicy;
use mpenc::session::{ChannelAction, ChannelEvent, Notice, Session, SessionAction};
use mpenc::types::ids;
use mpenc::UserId;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

struct Server {
    sessions: BTreeMap<UserId, Session>,
    channel: Vec<UserId>,
    wire: VecDeque<(UserId, String)>,
    now: u64,
}

impl Server {
    fn pump(&mut self) {
        let ids: Vec<UserId> = self.sessions.keys().cloned().collect();
        for id in ids {
            let s = self.sessions.get_mut(&id).unwrap();
            for n in s.drain_notices() {
                if let Notice::MessageAccepted { author, text, .. } = n {
                    println!("t={:<3} {id:<5} reads {author}: {text}", self.now);
                }
            }
            for a in s.drain_outbox() {
                match a {
                    ChannelAction::Send(p) => self.wire.push_back((id.clone(), p.to_text())),
                    other => println!("t={:<3} {id} asks for {other:?} (ignored here)", self.now),
                }
            }
        }
    }

    fn round(&mut self) {
        self.now += 1;
        let batch: Vec<_> = self.wire.drain(..).collect();
        for (sender, text) in batch {
            let packet = WirePacket::parse(&text).expect("well-formed frame");
            for to in &self.channel {
                let ev = ChannelEvent::Packet {
                    sender: sender.clone(),
                    packet: packet.clone(),
                };
                self.sessions
                    .get_mut(to)
                    .unwrap()
                    .handle_channel_event(self.now, ev);
            }
        }
        for s in self.sessions.values_mut() {
            s.tick(self.now);
        }
        self.pump();
    }
}

fn main() {
    let members = ids(["north", "south", "east"]);
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let (directory, identities) = Directory::generate(&members, &mut rng);
    let directory = Rc::new(directory);

    let mut server = Server {
        sessions: BTreeMap::new(),
        channel: members.clone(),
        wire: VecDeque::new(),
        now: 0,
    };
    for (i, id) in members.iter().enumerate() {
        let mut s = Session::with_seed(
            id.clone(),
            identities[id].clone(),
            directory.clone(),
            FlowPolicy::default(),
            i as u64,
        );
        s.handle_channel_event(
            0,
            ChannelEvent::Membership {
                joined: members.clone(),
                left: vec![],
            },
        );
        server.sessions.insert(id.clone(), s);
    }

    let include = SessionAction::ChangeMembership {
        include: members[1..].to_vec(),
        exclude: vec![],
    };
    let done = server
        .sessions
        .get_mut(&members[0])
        .unwrap()
        .execute(0, include)
        .unwrap()
        .unwrap();
    server.pump();
    while !done.is_resolved() {
        server.round();
    }
    println!("t={:<3} agreement: {:?}", server.now, done.get().unwrap());

    let say = SessionAction::SendMessage("anyone there?".into());
    server
        .sessions
        .get_mut(&members[2])
        .unwrap()
        .execute(server.now, say)
        .unwrap();
    server.pump();
    for _ in 0..30 {
        server.round();
    }
    let unacked: usize = server.sessions.values().map(|s| s.unacked().len()).sum();
    println!("t={:<3} unacknowledged messages: {unacked}", server.now);
}
