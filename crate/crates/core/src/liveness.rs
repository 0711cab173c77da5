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

//! Reliability and consistency over a transcript.
//!
//! A message acknowledges all of its ancestors. The monitor records which
//! readers have acknowledged each message, warns when content or FIN
//! messages are not fully acknowledged in time, and decides when to resend,
//! when to send an automatic acknowledgement and when to send a heartbeat.
//! Acknowledgements never demand acknowledgements themselves, so the action
//! stream goes quiet once the last content message is acknowledged.
//!
//! Time is a logical tick count supplied by the caller.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::transcript::{Msg, MsgId, MsgKind, Transcript};
use crate::types::{UserId, WarningCode};

/// Timing parameters, all in logical ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowPolicy {
    /// How long a received message may go unacknowledged by us before we
    /// send an automatic acknowledgement.
    pub ack_grace: u64,
    pub full_ack_timeout: u64,
    pub resend_interval: u64,
    /// `None` disables heartbeats and presence expiry.
    pub heartbeat: Option<u64>,
    pub buffer_timeout: u64,
    pub op_timeout: u64,
    pub shutdown_timeout: u64,
}

impl Default for FlowPolicy {
    fn default() -> Self {
        FlowPolicy {
            ack_grace: 4,
            full_ack_timeout: 16,
            resend_interval: 8,
            heartbeat: Some(32),
            buffer_timeout: 64,
            op_timeout: 64,
            shutdown_timeout: 64,
        }
    }
}

impl FlowPolicy {
    pub fn presence_expiry(&self) -> Option<u64> {
        self.heartbeat.map(|h| 2 * h)
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let all = [
            self.ack_grace,
            self.full_ack_timeout,
            self.resend_interval,
            self.heartbeat.unwrap_or(1),
            self.buffer_timeout,
            self.op_timeout,
            self.shutdown_timeout,
        ];
        if all.contains(&0) {
            return Err("all intervals must be positive");
        }
        Ok(())
    }
}

/// Last activity per member.
#[derive(Debug, Clone, Default)]
pub struct PresenceTracker {
    last: BTreeMap<UserId, u64>,
    expired: BTreeSet<UserId>,
}

impl PresenceTracker {
    pub fn touch(&mut self, who: &UserId, now: u64) {
        self.last.insert(who.clone(), now);
        self.expired.remove(who);
    }

    pub fn last_activity(&self, who: &UserId) -> Option<u64> {
        self.last.get(who).copied()
    }

    pub fn forget(&mut self, who: &UserId) {
        self.last.remove(who);
        self.expired.remove(who);
    }

    /// Members newly past the expiry threshold.
    pub fn newly_expired(&mut self, now: u64, threshold: u64) -> Vec<UserId> {
        let mut out = Vec::new();
        for (who, t) in &self.last {
            if now.saturating_sub(*t) > threshold && self.expired.insert(who.clone()) {
                out.push(who.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Tracked {
    author: UserId,
    kind: MsgKind,
    accepted_at: u64,
    expected: BTreeSet<UserId>,
    acked: BTreeSet<UserId>,
    deadline: Option<u64>,
    warned: bool,
    last_resend: Option<u64>,
}

impl Tracked {
    fn missing(&self) -> BTreeSet<UserId> {
        self.expected.difference(&self.acked).cloned().collect()
    }

    fn fully_acked(&self) -> bool {
        self.expected.is_subset(&self.acked)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Warn {
        code: WarningCode,
        msg: Option<MsgId>,
        members: Vec<UserId>,
    },
    /// Resend these messages, in causal order.
    Resend(Vec<MsgId>),
    AutoAck,
    Heartbeat,
}

/// Acknowledgement tracking for one subsession.
#[derive(Debug, Clone)]
pub struct ConsistencyMonitor {
    own_id: UserId,
    readers: BTreeSet<UserId>,
    policy: FlowPolicy,
    tracked: BTreeMap<MsgId, Tracked>,
    presence: PresenceTracker,
    last_own_send: u64,
    duplicate_resends: BTreeMap<MsgId, u64>,
}

impl ConsistencyMonitor {
    pub fn new(
        own_id: UserId,
        readers: impl IntoIterator<Item = UserId>,
        policy: FlowPolicy,
        now: u64,
    ) -> Self {
        let readers: BTreeSet<UserId> = readers.into_iter().collect();
        let mut presence = PresenceTracker::default();
        for r in readers.iter().filter(|r| **r != own_id) {
            presence.touch(r, now);
        }
        ConsistencyMonitor {
            own_id,
            readers,
            policy,
            tracked: BTreeMap::new(),
            presence,
            last_own_send: now,
            duplicate_resends: BTreeMap::new(),
        }
    }

    pub fn policy(&self) -> &FlowPolicy {
        &self.policy
    }

    pub fn readers(&self) -> &BTreeSet<UserId> {
        &self.readers
    }

    pub fn presence(&self) -> &PresenceTracker {
        &self.presence
    }

    /// Registers an accepted message: its author acknowledges all its
    /// ancestors, and it starts waiting for acknowledgements itself.
    pub fn on_accept(&mut self, t: &Transcript, m: &Msg, now: u64) {
        if let Ok(anc) = t.ancestors(&m.id) {
            for a in anc {
                if let Some(x) = self.tracked.get_mut(&a) {
                    if x.expected.contains(&m.author) {
                        x.acked.insert(m.author.clone());
                    }
                }
            }
        }
        if m.author == self.own_id {
            self.last_own_send = now;
        } else {
            self.presence.touch(&m.author, now);
        }
        let expected: BTreeSet<UserId> = m
            .readers
            .iter()
            .filter(|r| **r != m.author && self.readers.contains(*r))
            .cloned()
            .collect();
        let deadline = (m.kind != MsgKind::Ack).then_some(now + self.policy.full_ack_timeout);
        self.tracked.insert(
            m.id,
            Tracked {
                author: m.author.clone(),
                kind: m.kind,
                accepted_at: now,
                expected,
                acked: BTreeSet::new(),
                deadline,
                warned: false,
                last_resend: None,
            },
        );
    }

    /// A verified packet from `who` arrived, whether or not it could be
    /// accepted yet.
    pub fn on_activity(&mut self, who: &UserId, now: u64) {
        if self.readers.contains(who) {
            self.presence.touch(who, now);
        }
    }

    pub fn is_fully_acked(&self, id: &MsgId) -> bool {
        self.tracked.get(id).is_some_and(|x| x.fully_acked())
    }

    pub fn missing_acks(&self, id: &MsgId) -> BTreeSet<UserId> {
        self.tracked
            .get(id)
            .map(|x| x.missing())
            .unwrap_or_default()
    }

    /// Messages we authored or received that still lack acknowledgements
    /// from someone other than us.
    pub fn unacked(&self) -> Vec<MsgId> {
        self.tracked
            .iter()
            .filter(|(_, x)| {
                x.kind != MsgKind::Ack && !x.missing().iter().all(|m| *m == self.own_id)
            })
            .map(|(id, _)| *id)
            .collect()
    }

    /// A reader left: stop expecting anything from them.
    pub fn remove_reader(&mut self, who: &UserId) {
        self.readers.remove(who);
        self.presence.forget(who);
        for x in self.tracked.values_mut() {
            x.expected.remove(who);
        }
    }

    /// Our own message that the sender of a duplicate copy of `dup` should
    /// see next, rate limited per message.
    pub fn on_duplicate(&mut self, t: &Transcript, dup: &MsgId, now: u64) -> Option<MsgId> {
        let own_last = *t.last_by(&self.own_id)?;
        if own_last != *dup && !t.is_ancestor(dup, &own_last).unwrap_or(false) {
            return None;
        }
        let last = self.duplicate_resends.get(&own_last).copied();
        if last.is_some_and(|l| now < l + self.policy.resend_interval) {
            return None;
        }
        self.duplicate_resends.insert(own_last, now);
        Some(own_last)
    }

    pub fn tick(&mut self, t: &Transcript, now: u64) -> Vec<Action> {
        let mut actions = Vec::new();
        let mut resend: BTreeSet<MsgId> = BTreeSet::new();
        let interval = self.policy.resend_interval;

        for (id, x) in self.tracked.iter_mut() {
            if x.fully_acked() {
                continue;
            }
            let missing = x.missing();
            let others_missing: Vec<UserId> = missing
                .iter()
                .filter(|m| **m != self.own_id)
                .cloned()
                .collect();
            if others_missing.is_empty() {
                continue;
            }
            if let Some(d) = x.deadline {
                if !x.warned && now >= d {
                    x.warned = true;
                    actions.push(Action::Warn {
                        code: WarningCode::FullAckTimeout,
                        msg: Some(*id),
                        members: others_missing.clone(),
                    });
                }
            }
            let due = x.last_resend.is_none_or(|l| now >= l + interval);
            if !due {
                continue;
            }
            // A warned message is resent periodically. Our own messages are
            // also resent once a reader who lacks them has shown activity
            // long enough after we sent them.
            let behind = x.author == self.own_id
                && others_missing.iter().any(|r| {
                    self.presence
                        .last_activity(r)
                        .is_some_and(|a| a >= x.accepted_at + interval)
                });
            if x.warned || behind {
                x.last_resend = Some(now);
                resend.insert(*id);
                for r in &others_missing {
                    if let Ok(anc) = t.ancestors(id) {
                        resend.extend(anc.into_iter().filter(|a| !t.has_seen(r, a)));
                    }
                }
            }
        }
        if !resend.is_empty() {
            let mut ids: Vec<MsgId> = resend.into_iter().collect();
            ids.sort_by_key(|id| t.acceptance_index(id).unwrap_or(usize::MAX));
            actions.push(Action::Resend(ids));
        }

        let needs_ack = self.tracked.iter().any(|(id, x)| {
            x.author != self.own_id
                && x.kind != MsgKind::Ack
                && !t.has_seen(&self.own_id, id)
                && now >= x.accepted_at + self.policy.ack_grace
        });
        let alone = self.readers.iter().all(|r| *r == self.own_id);
        if needs_ack {
            actions.push(Action::AutoAck);
        } else if let Some(h) = self.policy.heartbeat {
            if !alone && now >= self.last_own_send + h {
                actions.push(Action::Heartbeat);
            }
        }

        if let Some(expiry) = self.policy.presence_expiry() {
            let expired = self.presence.newly_expired(now, expiry);
            if !expired.is_empty() {
                actions.push(Action::Warn {
                    code: WarningCode::PresenceExpired,
                    msg: None,
                    members: expired,
                });
            }
        }
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::AddStatus;

    fn id(n: u32) -> MsgId {
        let mut b = [0u8; 32];
        b[..4].copy_from_slice(&n.to_be_bytes());
        MsgId(b)
    }

    fn readers(names: &[&str]) -> BTreeSet<UserId> {
        names.iter().map(|n| UserId::from(*n)).collect()
    }

    fn msg(n: u32, author: &str, parents: &[u32], kind: MsgKind, rs: &[&str]) -> Msg {
        Msg {
            id: id(n),
            author: author.into(),
            readers: readers(rs),
            parents: parents.iter().map(|p| id(*p)).collect(),
            body: match kind {
                MsgKind::Content => b"x".to_vec(),
                k => k.control_body().to_vec(),
            },
            kind,
        }
    }

    struct Fixture {
        t: Transcript,
        mon: ConsistencyMonitor,
    }

    impl Fixture {
        fn new(own: &str, rs: &[&str], policy: FlowPolicy) -> Self {
            Fixture {
                t: Transcript::new(),
                mon: ConsistencyMonitor::new(own.into(), readers(rs), policy, 0),
            }
        }

        fn add(&mut self, m: Msg, now: u64) {
            let r = self.t.add(m, now);
            assert_eq!(r.status, AddStatus::Accepted);
            for m in r.accepted {
                self.mon.on_accept(&self.t, &m, now);
            }
        }
    }

    const ABC: [&str; 3] = ["a", "b", "c"];

    #[test]
    fn implicit_and_transitive_acks() {
        let mut f = Fixture::new("a", &ABC, FlowPolicy::default());
        f.add(msg(1, "a", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "b", &[1], MsgKind::Content, &ABC), 1);
        assert_eq!(f.mon.missing_acks(&id(1)), readers(&["c"]));
        f.add(msg(3, "c", &[2], MsgKind::Ack, &ABC), 2);
        assert!(f.mon.is_fully_acked(&id(1)));
        assert_eq!(f.mon.missing_acks(&id(2)), readers(&["a"]));
    }

    #[test]
    fn single_reader_is_immediately_fully_acked() {
        let mut f = Fixture::new("a", &["a"], FlowPolicy::default());
        f.add(msg(1, "a", &[], MsgKind::Content, &["a"]), 0);
        assert!(f.mon.is_fully_acked(&id(1)));
        assert!(f.mon.tick(&f.t, 100).is_empty());
    }

    #[test]
    fn warn_names_exactly_the_missing_members() {
        let policy = FlowPolicy {
            heartbeat: None,
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("a", &ABC, policy);
        f.add(msg(1, "a", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "b", &[1], MsgKind::Ack, &ABC), 1);
        assert!(f.mon.tick(&f.t, 15).is_empty());
        let actions = f.mon.tick(&f.t, 16);
        assert_eq!(
            actions[0],
            Action::Warn {
                code: WarningCode::FullAckTimeout,
                msg: Some(id(1)),
                members: vec!["c".into()]
            }
        );
        assert_eq!(actions[1], Action::Resend(vec![id(1)]));
        // Warned once; resends follow at the interval.
        assert!(f.mon.tick(&f.t, 17).is_empty());
        assert_eq!(f.mon.tick(&f.t, 24), vec![Action::Resend(vec![id(1)])]);
    }

    #[test]
    fn batched_auto_ack_after_grace() {
        let policy = FlowPolicy {
            heartbeat: None,
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("c", &ABC, policy);
        f.add(msg(1, "a", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "b", &[1], MsgKind::Content, &ABC), 1);
        f.add(msg(3, "a", &[2], MsgKind::Content, &ABC), 2);
        assert!(f.mon.tick(&f.t, 3).is_empty());
        assert_eq!(f.mon.tick(&f.t, 4), vec![Action::AutoAck]);
        // One ack over the frontier covers the whole burst.
        f.add(msg(4, "c", &[3], MsgKind::Ack, &ABC), 4);
        assert!(f.mon.tick(&f.t, 5).is_empty());
        assert!(f
            .mon
            .tick(&f.t, 200)
            .iter()
            .all(|a| !matches!(a, Action::AutoAck)));
    }

    #[test]
    fn acks_do_not_demand_acks() {
        let policy = FlowPolicy {
            heartbeat: None,
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("a", &ABC, policy);
        f.add(msg(1, "b", &[], MsgKind::Ack, &ABC), 0);
        assert!(f.mon.tick(&f.t, 100).is_empty());
    }

    #[test]
    fn idle_and_acked_means_no_actions() {
        let policy = FlowPolicy {
            heartbeat: None,
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("a", &ABC, policy);
        f.add(msg(1, "a", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "b", &[1], MsgKind::Ack, &ABC), 1);
        f.add(msg(3, "c", &[1], MsgKind::Ack, &ABC), 1);
        for now in 2..100 {
            assert!(f.mon.tick(&f.t, now).is_empty());
        }
    }

    #[test]
    fn heartbeat_and_presence() {
        let policy = FlowPolicy {
            heartbeat: Some(10),
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("a", &["a", "b"], policy);
        assert_eq!(f.mon.tick(&f.t, 10), vec![Action::Heartbeat]);
        f.add(msg(1, "a", &[], MsgKind::Ack, &["a", "b"]), 10);
        assert!(f.mon.tick(&f.t, 11).is_empty());
        let actions = f.mon.tick(&f.t, 21);
        assert!(actions.contains(&Action::Warn {
            code: WarningCode::PresenceExpired,
            msg: None,
            members: vec!["b".into()]
        }));
    }

    #[test]
    fn own_message_resent_when_reader_active_but_behind() {
        let policy = FlowPolicy {
            heartbeat: None,
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("a", &ABC, policy);
        f.add(msg(1, "a", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "b", &[1], MsgKind::Ack, &ABC), 1);
        // c speaks at tick 9 without having seen message 1.
        f.add(msg(3, "c", &[], MsgKind::Content, &ABC), 9);
        let actions = f.mon.tick(&f.t, 9);
        assert!(actions.contains(&Action::Resend(vec![id(1)])));
    }

    #[test]
    fn activity_without_acceptance_still_counts() {
        let policy = FlowPolicy {
            heartbeat: None,
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("a", &ABC, policy);
        f.add(msg(1, "a", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "b", &[1], MsgKind::Ack, &ABC), 1);
        // A packet from c is buffered for a missing parent, so nothing is accepted.
        f.mon.on_activity(&"c".into(), 9);
        assert!(f.mon.tick(&f.t, 9).contains(&Action::Resend(vec![id(1)])));
    }

    #[test]
    fn leaver_removed_from_expectations() {
        let policy = FlowPolicy {
            heartbeat: None,
            ..FlowPolicy::default()
        };
        let mut f = Fixture::new("a", &ABC, policy);
        f.add(msg(1, "a", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "b", &[1], MsgKind::Ack, &ABC), 1);
        f.mon.remove_reader(&"c".into());
        assert!(f.mon.is_fully_acked(&id(1)));
        assert!(f.mon.tick(&f.t, 50).is_empty());
    }

    #[test]
    fn duplicate_triggers_rate_limited_resend() {
        let mut f = Fixture::new("a", &ABC, FlowPolicy::default());
        f.add(msg(1, "b", &[], MsgKind::Content, &ABC), 0);
        f.add(msg(2, "a", &[1], MsgKind::Ack, &ABC), 1);
        assert_eq!(f.mon.on_duplicate(&f.t, &id(1), 5), Some(id(2)));
        assert_eq!(f.mon.on_duplicate(&f.t, &id(1), 6), None);
        assert_eq!(f.mon.on_duplicate(&f.t, &id(1), 13), Some(id(2)));
    }

    #[test]
    fn policy_validation() {
        assert!(FlowPolicy::default().validate().is_ok());
        assert!(FlowPolicy {
            resend_interval: 0,
            ..FlowPolicy::default()
        }
        .validate()
        .is_err());
        assert_eq!(FlowPolicy::default().presence_expiry(), Some(64));
    }
}
