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

//! A deterministic in-memory group transport.
//!
//! [`SimServer`] plays the part of the chat server. It keeps a logical clock
//! and the channel membership, and echoes every packet to all channel
//! members, the sender included, one tick after it was sent. Deliveries due
//! on the same tick keep their send order. All randomness, both the member
//! sessions' and the fault plan's, is derived from one seed.
//!
//! Faults are injected with [`Fault`] values: dropping, delaying or tampering
//! with a chosen packet, random loss, and temporary isolation of a member.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use ed25519_dalek::SigningKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{MessageType, WirePacket};
use crate::error::{Error, Result};
use crate::greeter::parse_greeting;
use crate::identity::Directory;
use crate::liveness::FlowPolicy;
use crate::observable::Completion;
use crate::session::{ChannelAction, ChannelEvent, Notice, OpOutcome, Session};
use crate::transcript::MsgId;
use crate::types::UserId;

/// Which packets a fault applies to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketFilter {
    Greeting,
    Data,
    #[default]
    Any,
}

impl PacketFilter {
    pub fn matches(self, t: Option<MessageType>) -> bool {
        match self {
            PacketFilter::Any => true,
            PacketFilter::Greeting => t == Some(MessageType::Greeting),
            PacketFilter::Data => t == Some(MessageType::Data),
        }
    }
}

fn first() -> u32 {
    1
}

/// A fault to inject. `nth` counts matching sends by `from` after the fault
/// is installed, starting at 1. With `to` set, only that recipient's copy is
/// affected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Fault {
    Drop {
        from: UserId,
        #[serde(default)]
        to: Option<UserId>,
        #[serde(default, rename = "type")]
        filter: PacketFilter,
        #[serde(default = "first")]
        nth: u32,
    },
    Delay {
        from: UserId,
        #[serde(default)]
        to: Option<UserId>,
        #[serde(default, rename = "type")]
        filter: PacketFilter,
        #[serde(default = "first")]
        nth: u32,
        ticks: u64,
    },
    Tamper {
        from: UserId,
        #[serde(default)]
        to: Option<UserId>,
        #[serde(default, rename = "type")]
        filter: PacketFilter,
        #[serde(default = "first")]
        nth: u32,
        /// Bit index into the raw packet bytes, taken modulo their length.
        #[serde(default)]
        bit: usize,
    },
    Loss {
        rate: f64,
        #[serde(default)]
        from: Option<UserId>,
        #[serde(default, rename = "type")]
        filter: PacketFilter,
        #[serde(default)]
        until: Option<u64>,
    },
    Isolate {
        member: UserId,
        until: u64,
    },
}

impl Fault {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Fault::Drop { nth, .. } | Fault::Delay { nth, .. } | Fault::Tamper { nth, .. }
                if *nth == 0 =>
            {
                Err("nth counts from 1".into())
            }
            Fault::Loss { rate, .. } if !(0.0..=1.0).contains(rate) => {
                Err(format!("loss rate {rate} out of range"))
            }
            _ => Ok(()),
        }
    }
}

struct InstalledFault {
    fault: Fault,
    seen: u32,
    spent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Effect {
    Pass,
    Drop,
    Delay(u64),
    Tamper(usize),
}

/// One send as seen by the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PacketRecord {
    pub at: u64,
    pub from: UserId,
    #[serde(rename = "type")]
    pub kind: String,
    pub id: String,
    /// Operation kind and stage of a greeting, such as `establish/upflow`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub len: usize,
    pub recipients: Vec<UserId>,
    /// Recipients whose copy a fault changed, with what happened to it.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<String>,
    /// The packet as sent, before any fault.
    #[serde(skip)]
    pub packet: WirePacket,
}

#[derive(Debug, Clone)]
enum Delivery {
    Packet {
        sender: UserId,
        packet: WirePacket,
    },
    Membership {
        joined: Vec<UserId>,
        left: Vec<UserId>,
    },
}

#[derive(Debug, Clone)]
struct Queued {
    due: u64,
    seq: u64,
    to: UserId,
    what: Delivery,
}

/// The simulated server plus every member's session.
pub struct SimServer {
    now: u64,
    seq: u64,
    policy: FlowPolicy,
    rng: ChaCha20Rng,
    directory: Rc<Directory>,
    keys: BTreeMap<UserId, SigningKey>,
    sessions: BTreeMap<UserId, Session>,
    channel: BTreeSet<UserId>,
    queue: Vec<Queued>,
    faults: Vec<InstalledFault>,
    log: Vec<PacketRecord>,
    notices: BTreeMap<UserId, Vec<(u64, Notice)>>,
}

impl std::fmt::Debug for SimServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimServer")
            .field("now", &self.now)
            .field("channel", &self.channel)
            .field("queued", &self.queue.len())
            .finish_non_exhaustive()
    }
}

impl SimServer {
    /// Creates sessions for `members`, none of them in the channel yet.
    pub fn new(members: &[UserId], seed: u64, policy: FlowPolicy) -> Self {
        Self::with_member_seeds(members, seed, policy, &BTreeMap::new())
    }

    /// Like [`SimServer::new`], with explicit random seeds for some
    /// members' sessions. Identity keys always come from `seed`.
    pub fn with_member_seeds(
        members: &[UserId],
        seed: u64,
        policy: FlowPolicy,
        member_seeds: &BTreeMap<UserId, u64>,
    ) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (directory, keys) = Directory::generate(members, &mut rng);
        let directory = Rc::new(directory);
        let mut sessions = BTreeMap::new();
        for m in members {
            let derived = ChaCha20Rng::from_rng(&mut rng).expect("chacha seeding is infallible");
            let session_rng = member_seeds
                .get(m)
                .map_or(derived, |s| ChaCha20Rng::seed_from_u64(*s));
            let provider: Rc<dyn crate::identity::IdentityProvider> = directory.clone();
            sessions.insert(
                m.clone(),
                Session::new(m.clone(), keys[m].clone(), provider, policy, session_rng),
            );
        }
        SimServer {
            now: 0,
            seq: 0,
            policy,
            rng,
            directory,
            keys,
            sessions,
            channel: BTreeSet::new(),
            queue: Vec::new(),
            faults: Vec::new(),
            log: Vec::new(),
            notices: members.iter().map(|m| (m.clone(), Vec::new())).collect(),
        }
    }

    /// Creates the sessions and puts all of them in the channel at tick 0.
    pub fn with_channel(members: &[UserId], seed: u64, policy: FlowPolicy) -> Self {
        let mut sim = Self::new(members, seed, policy);
        for m in members {
            sim.join(m);
        }
        sim
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn policy(&self) -> &FlowPolicy {
        &self.policy
    }

    pub fn members(&self) -> impl Iterator<Item = &UserId> {
        self.sessions.keys()
    }

    pub fn channel(&self) -> &BTreeSet<UserId> {
        &self.channel
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn signing_key(&self, id: &UserId) -> Option<&SigningKey> {
        self.keys.get(id)
    }

    /// Panics on an unknown member; scenario input is validated up front.
    pub fn session(&self, id: &UserId) -> &Session {
        &self.sessions[id]
    }

    pub fn session_mut(&mut self, id: &UserId) -> &mut Session {
        self.sessions.get_mut(id).expect("unknown member")
    }

    pub fn packet_log(&self) -> &[PacketRecord] {
        &self.log
    }

    /// Every notice a member produced, with the tick it was produced at.
    pub fn notices(&self, id: &UserId) -> &[(u64, Notice)] {
        &self.notices[id]
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn add_fault(&mut self, fault: Fault) {
        self.faults.push(InstalledFault {
            fault,
            seen: 0,
            spent: false,
        });
    }

    // ----- channel membership -------------------------------------------

    pub fn join(&mut self, id: &UserId) {
        if !self.sessions.contains_key(id) || self.channel.contains(id) {
            return;
        }
        self.channel.insert(id.clone());
        let all: Vec<UserId> = self.channel.iter().cloned().collect();
        for m in all.clone() {
            let joined = if m == *id {
                all.clone()
            } else {
                vec![id.clone()]
            };
            self.enqueue(
                m,
                1,
                Delivery::Membership {
                    joined,
                    left: Vec::new(),
                },
            );
        }
    }

    /// Removes members from the channel without any protocol exchange.
    pub fn disconnect(&mut self, ids: &[UserId]) {
        let gone: Vec<UserId> = ids
            .iter()
            .filter(|m| self.channel.contains(*m))
            .cloned()
            .collect();
        if gone.is_empty() {
            return;
        }
        let before: Vec<UserId> = self.channel.iter().cloned().collect();
        for g in &gone {
            self.channel.remove(g);
        }
        for m in before {
            self.enqueue(
                m,
                1,
                Delivery::Membership {
                    joined: Vec::new(),
                    left: gone.clone(),
                },
            );
        }
    }

    fn enqueue(&mut self, to: UserId, delay: u64, what: Delivery) {
        self.seq += 1;
        self.queue.push(Queued {
            due: self.now + delay,
            seq: self.seq,
            to,
            what,
        });
    }

    // ----- user actions --------------------------------------------------

    pub fn send(&mut self, by: &UserId, text: &str) -> Result<MsgId> {
        let r = self.session_mut(by).send_message(text);
        self.flush(by);
        r
    }

    pub fn propose(
        &mut self,
        by: &UserId,
        include: &[UserId],
        exclude: &[UserId],
    ) -> Result<Completion<OpOutcome>> {
        if !self.sessions.contains_key(by) {
            return Err(Error::NotFound);
        }
        let r = self.session_mut(by).propose_change(include, exclude);
        self.flush(by);
        r
    }

    pub fn shutdown(&mut self, by: &UserId) -> Result<()> {
        let r = self.session_mut(by).shutdown();
        self.flush(by);
        r
    }

    // ----- time -----------------------------------------------------------

    /// Advances the clock by one tick: deliveries due now, in send order,
    /// then every session's timers in member order.
    pub fn step(&mut self) {
        self.now += 1;
        self.deliver_due();
        let ids: Vec<UserId> = self.sessions.keys().cloned().collect();
        for id in ids {
            let now = self.now;
            self.session_mut(&id).tick(now);
            self.flush(&id);
        }
    }

    pub fn run_for(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.step();
        }
    }

    pub fn run_until(&mut self, t: u64) {
        while self.now < t {
            self.step();
        }
    }

    /// Steps until nothing is in flight, no operation is pending, no member
    /// buffers a message with missing parents and every content message is
    /// fully acknowledged, or `max` ticks pass. Returns whether that state
    /// was reached.
    pub fn settle(&mut self, max: u64) -> bool {
        for _ in 0..max {
            if self.is_quiet() {
                return true;
            }
            self.step();
        }
        self.is_quiet()
    }

    pub fn is_quiet(&self) -> bool {
        self.queue.is_empty()
            && self.sessions.values().all(|s| {
                !s.op_in_progress() && s.unacked().is_empty() && s.transcript().deferred_len() == 0
            })
    }

    fn deliver_due(&mut self) {
        loop {
            let next = self
                .queue
                .iter()
                .enumerate()
                .filter(|(_, q)| q.due <= self.now)
                .min_by_key(|(_, q)| (q.due, q.seq))
                .map(|(i, _)| i);
            let Some(i) = next else { break };
            let q = self.queue.remove(i);
            if !self.sessions.contains_key(&q.to) {
                continue;
            }
            let now = self.now;
            let ev = match q.what {
                Delivery::Packet { sender, packet } => {
                    if !self.channel.contains(&q.to) || self.isolated(&q.to) {
                        continue;
                    }
                    ChannelEvent::Packet { sender, packet }
                }
                Delivery::Membership { joined, left } => ChannelEvent::Membership { joined, left },
            };
            self.session_mut(&q.to).handle_channel_event(now, ev);
            self.flush(&q.to);
        }
    }

    fn isolated(&self, who: &UserId) -> bool {
        self.faults.iter().any(|f| matches!(&f.fault, Fault::Isolate { member, until } if member == who && self.now < *until))
    }

    /// Moves a session's notices into the log and carries out its channel
    /// actions.
    fn flush(&mut self, id: &UserId) {
        let now = self.now;
        let s = self.sessions.get_mut(id).expect("known member");
        let notices = s.drain_notices();
        let actions = s.drain_outbox();
        self.notices
            .get_mut(id)
            .expect("known member")
            .extend(notices.into_iter().map(|n| (now, n)));
        for a in actions {
            match a {
                ChannelAction::Send(p) => self.broadcast(id, p),
                ChannelAction::Join => self.join(id),
                ChannelAction::Leave => self.disconnect(std::slice::from_ref(id)),
                ChannelAction::Kick(who) => {
                    if self.channel.contains(id) {
                        self.disconnect(&who);
                    }
                }
            }
        }
    }

    fn broadcast(&mut self, from: &UserId, packet: WirePacket) {
        if !self.channel.contains(from) || self.isolated(from) {
            return;
        }
        let mtype = packet.message_type();
        let recipients: Vec<UserId> = self.channel.iter().cloned().collect();
        let effects = self.fault_effects(from, mtype, &recipients);
        let mut record = PacketRecord {
            at: self.now,
            from: from.clone(),
            kind: match mtype {
                Some(MessageType::Greeting) => "greeting",
                Some(MessageType::Data) => "data",
                None => "other",
            }
            .to_owned(),
            id: packet.id.short(),
            stage: parse_greeting(&packet)
                .ok()
                .map(|f| f.greet_type.to_string()),
            len: packet.bytes.len(),
            recipients: recipients.clone(),
            faults: Vec::new(),
            packet: packet.clone(),
        };
        for (to, effect) in recipients.into_iter().zip(effects) {
            match effect {
                Effect::Pass => self.enqueue(
                    to,
                    1,
                    Delivery::Packet {
                        sender: from.clone(),
                        packet: packet.clone(),
                    },
                ),
                Effect::Drop => record.faults.push(format!("{to}: dropped")),
                Effect::Delay(d) => {
                    record.faults.push(format!("{to}: delayed {d}"));
                    self.enqueue(
                        to,
                        1 + d,
                        Delivery::Packet {
                            sender: from.clone(),
                            packet: packet.clone(),
                        },
                    );
                }
                Effect::Tamper(bit) => {
                    let mut bytes = packet.bytes.clone();
                    let i = bit % (bytes.len() * 8);
                    bytes[i / 8] ^= 1 << (i % 8);
                    record.faults.push(format!("{to}: bit {i} flipped"));
                    // Bytes that no longer decode still reach the member, as
                    // an unparsed packet.
                    let tampered =
                        WirePacket::from_bytes(bytes.clone()).unwrap_or_else(|_| WirePacket {
                            records: Vec::new(),
                            id: crate::codec::PacketId::of(&bytes),
                            bytes,
                        });
                    self.enqueue(
                        to,
                        1,
                        Delivery::Packet {
                            sender: from.clone(),
                            packet: tampered,
                        },
                    );
                }
            }
        }
        self.log.push(record);
    }

    fn fault_effects(
        &mut self,
        from: &UserId,
        mtype: Option<MessageType>,
        recipients: &[UserId],
    ) -> Vec<Effect> {
        let mut effects = vec![Effect::Pass; recipients.len()];
        let now = self.now;
        for f in self.faults.iter_mut().filter(|f| !f.spent) {
            let (sel_from, to, filter, nth, effect) = match &f.fault {
                Fault::Drop {
                    from,
                    to,
                    filter,
                    nth,
                } => (from, to, *filter, *nth, Effect::Drop),
                Fault::Delay {
                    from,
                    to,
                    filter,
                    nth,
                    ticks,
                } => (from, to, *filter, *nth, Effect::Delay(*ticks)),
                Fault::Tamper {
                    from,
                    to,
                    filter,
                    nth,
                    bit,
                } => (from, to, *filter, *nth, Effect::Tamper(*bit)),
                Fault::Loss {
                    rate,
                    from: lf,
                    filter,
                    until,
                } => {
                    if until.is_some_and(|u| now >= u)
                        || lf.as_ref().is_some_and(|x| x != from)
                        || !filter.matches(mtype)
                    {
                        continue;
                    }
                    for e in effects.iter_mut() {
                        if self.rng.gen_bool(*rate) && *e == Effect::Pass {
                            *e = Effect::Drop;
                        }
                    }
                    continue;
                }
                Fault::Isolate { .. } => continue,
            };
            if sel_from != from || !filter.matches(mtype) {
                continue;
            }
            f.seen += 1;
            if f.seen != nth {
                continue;
            }
            f.spent = true;
            for (e, r) in effects.iter_mut().zip(recipients) {
                if to.as_ref().is_none_or(|t| t == r) && *e == Effect::Pass {
                    *e = effect;
                }
            }
        }
        effects
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ids;

    #[test]
    fn establish_and_chat() {
        let m = ids(["alice", "bob", "carol"]);
        let mut sim = SimServer::with_channel(&m, 1, FlowPolicy::default());
        sim.step();
        let h = sim.propose(&m[0], &m[1..], &[]).unwrap();
        sim.run_for(10);
        assert!(matches!(h.get(), Some(OpOutcome::Succeeded { .. })));
        sim.send(&m[1], "hi").unwrap();
        assert!(sim.settle(100));
        let gk = sim.session(&m[0]).current_keys().group_key;
        for id in &m {
            assert_eq!(sim.session(id).members(), &m[..]);
            assert_eq!(sim.session(id).current_keys().group_key, gk);
            assert_eq!(
                sim.session(id).transcript().len(),
                sim.session(&m[0]).transcript().len()
            );
        }
        let greetings = sim
            .packet_log()
            .iter()
            .filter(|p| p.kind == "greeting")
            .count();
        assert_eq!(greetings, 5);
    }

    #[test]
    fn same_seed_same_run() {
        let run = |seed| {
            let m = ids(["a", "b"]);
            let mut sim = SimServer::with_channel(&m, seed, FlowPolicy::default());
            sim.step();
            sim.propose(&m[0], &m[1..], &[]).unwrap();
            sim.run_for(20);
            sim.session(&m[1]).current_keys().group_key
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn nth_counts_matching_sends() {
        let m = ids(["a", "b"]);
        let mut sim = SimServer::with_channel(&m, 3, FlowPolicy::default());
        sim.add_fault(Fault::Drop {
            from: m[0].clone(),
            to: Some(m[1].clone()),
            filter: PacketFilter::Greeting,
            nth: 2,
        });
        sim.step();
        sim.propose(&m[0], &m[1..], &[]).unwrap();
        sim.run_for(5);
        let faulted: Vec<&PacketRecord> = sim
            .packet_log()
            .iter()
            .filter(|p| !p.faults.is_empty())
            .collect();
        assert_eq!(faulted.len(), 1);
        assert_eq!(faulted[0].kind, "greeting");
    }
}
