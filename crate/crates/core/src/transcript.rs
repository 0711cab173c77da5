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

//! Causal-order transcripts.
//!
//! Every data message names the latest messages its author had seen. Those
//! references form a DAG which doubles as an acknowledgement structure. A
//! [`Transcript`] accepts a message only once all its parents are present,
//! deferring it otherwise, and rejects messages whose parents are causally
//! related to each other or which fork their author's own line.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::codec::PacketId;
use crate::error::{Error, Result};
use crate::types::UserId;

/// A message identifier: the SHA-256 of the data packet carrying it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId(pub [u8; 32]);

impl MsgId {
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl From<PacketId> for MsgId {
    fn from(p: PacketId) -> Self {
        MsgId(p.0)
    }
}

impl fmt::Debug for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MsgId({})", self.short())
    }
}

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgKind {
    Content,
    Ack,
    Fin,
}

const FIN_BODY: [u8; 2] = [0x00, 0x01];

impl MsgKind {
    /// Classifies a decrypted body. Control bodies start with a zero byte,
    /// which never begins a non-empty UTF-8 chat message.
    pub fn classify(body: &[u8]) -> Result<MsgKind> {
        match body {
            [] => Ok(MsgKind::Ack),
            b if b == FIN_BODY => Ok(MsgKind::Fin),
            [0x00, ..] => Err(Error::Malformed("unknown control body")),
            b => std::str::from_utf8(b)
                .map(|_| MsgKind::Content)
                .map_err(|_| Error::Malformed("message body is not UTF-8")),
        }
    }

    pub fn control_body(self) -> &'static [u8] {
        match self {
            MsgKind::Ack => &[],
            MsgKind::Fin => &FIN_BODY,
            MsgKind::Content => panic!("content has no fixed body"),
        }
    }

    pub fn is_control(self) -> bool {
        self != MsgKind::Content
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MsgKind::Content => "content",
            MsgKind::Ack => "ack",
            MsgKind::Fin => "fin",
        }
    }
}

/// A verified-decrypted message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Msg {
    pub id: MsgId,
    pub author: UserId,
    pub readers: BTreeSet<UserId>,
    pub parents: BTreeSet<MsgId>,
    pub body: Vec<u8>,
    pub kind: MsgKind,
}

impl Msg {
    pub fn text(&self) -> Option<&str> {
        match self.kind {
            MsgKind::Content => std::str::from_utf8(&self.body).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    AntiChain,
    AuthorFork,
    Duplicate,
    ContentAfterFin,
    NotAReader,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::AntiChain => "anti-chain",
            RejectReason::AuthorFork => "author-fork",
            RejectReason::Duplicate => "duplicate",
            RejectReason::ContentAfterFin => "content-after-fin",
            RejectReason::NotAReader => "not-a-reader",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddStatus {
    Accepted,
    Deferred,
    Rejected(RejectReason),
}

/// The outcome of [`Transcript::add`]. `accepted` lists every message that
/// entered the transcript as a result, in acceptance order, including
/// previously deferred descendants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddResult {
    pub status: AddStatus,
    pub accepted: Vec<Msg>,
    pub rejected: Vec<(MsgId, RejectReason)>,
}

#[derive(Debug, Clone)]
struct Deferred {
    msg: Msg,
    since: u64,
    warned: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    nodes: BTreeMap<MsgId, Msg>,
    children: BTreeMap<MsgId, BTreeSet<MsgId>>,
    order: Vec<MsgId>,
    last_by_author: BTreeMap<UserId, MsgId>,
    fin_by: BTreeSet<UserId>,
    frontier: BTreeSet<MsgId>,
    deferred: BTreeMap<MsgId, Deferred>,
    duplicates: u64,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: &MsgId) -> Option<&Msg> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &MsgId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Whether `id` is known at all, accepted or waiting for parents.
    pub fn knows(&self, id: &MsgId) -> bool {
        self.nodes.contains_key(id) || self.deferred.contains_key(id)
    }

    /// Accepted messages in acceptance order, which is a linear extension of
    /// the causal order.
    pub fn messages(&self) -> impl Iterator<Item = &Msg> {
        self.order.iter().map(|id| &self.nodes[id])
    }

    pub fn acceptance_index(&self, id: &MsgId) -> Option<usize> {
        self.order.iter().position(|x| x == id)
    }

    pub fn frontier(&self) -> &BTreeSet<MsgId> {
        &self.frontier
    }

    pub fn last_by(&self, author: &UserId) -> Option<&MsgId> {
        self.last_by_author.get(author)
    }

    pub fn has_fin(&self, author: &UserId) -> bool {
        self.fin_by.contains(author)
    }

    pub fn deferred_len(&self) -> usize {
        self.deferred.len()
    }

    /// Deferred messages with the parents each one still waits for.
    pub fn deferred(&self) -> impl Iterator<Item = (&Msg, Vec<MsgId>)> {
        self.deferred.values().map(|d| {
            let missing = d
                .msg
                .parents
                .iter()
                .filter(|p| !self.nodes.contains_key(p))
                .copied()
                .collect();
            (&d.msg, missing)
        })
    }

    pub fn duplicates_seen(&self) -> u64 {
        self.duplicates
    }

    /// The id-to-parents map, for comparing transcripts across members.
    pub fn graph(&self) -> BTreeMap<MsgId, BTreeSet<MsgId>> {
        self.nodes
            .iter()
            .map(|(id, m)| (*id, m.parents.clone()))
            .collect()
    }

    pub fn ancestors(&self, id: &MsgId) -> Result<BTreeSet<MsgId>> {
        let m = self.nodes.get(id).ok_or(Error::NotFound)?;
        let mut seen = BTreeSet::new();
        let mut stack: Vec<MsgId> = m.parents.iter().copied().collect();
        while let Some(p) = stack.pop() {
            if seen.insert(p) {
                if let Some(pm) = self.nodes.get(&p) {
                    stack.extend(pm.parents.iter().copied());
                }
            }
        }
        Ok(seen)
    }

    /// Strict ancestry: whether `a` is reachable from `b` over parent edges.
    pub fn is_ancestor(&self, a: &MsgId, b: &MsgId) -> Result<bool> {
        if !self.nodes.contains_key(a) || !self.nodes.contains_key(b) {
            return Err(Error::NotFound);
        }
        Ok(self.reaches(b, a))
    }

    fn reaches(&self, from: &MsgId, target: &MsgId) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<MsgId> = self.nodes[from].parents.iter().copied().collect();
        while let Some(p) = stack.pop() {
            if p == *target {
                return true;
            }
            if seen.insert(p) {
                stack.extend(self.nodes[&p].parents.iter().copied());
            }
        }
        false
    }

    /// Whether `reader` has seen `id`: it authored it, or authored a
    /// descendant of it.
    pub fn has_seen(&self, reader: &UserId, id: &MsgId) -> bool {
        let Some(m) = self.nodes.get(id) else {
            return false;
        };
        if m.author == *reader {
            return true;
        }
        match self.last_by_author.get(reader) {
            Some(last) => last == id || self.reaches(last, id),
            None => false,
        }
    }

    /// Accepts, defers or rejects `m`. `now` stamps deferrals so that
    /// [`Transcript::stale_deferred`] can report them.
    pub fn add(&mut self, m: Msg, now: u64) -> AddResult {
        let mut result = AddResult {
            status: AddStatus::Accepted,
            accepted: Vec::new(),
            rejected: Vec::new(),
        };
        if self.knows(&m.id) {
            self.duplicates += 1;
            result.status = AddStatus::Rejected(RejectReason::Duplicate);
            return result;
        }
        if m.parents.iter().any(|p| !self.nodes.contains_key(p)) {
            let id = m.id;
            self.deferred.insert(
                id,
                Deferred {
                    msg: m,
                    since: now,
                    warned: false,
                },
            );
            result.status = AddStatus::Deferred;
            return result;
        }
        match self.check(&m) {
            Err(reason) => {
                result.status = AddStatus::Rejected(reason);
                return result;
            }
            Ok(()) => self.insert(m, &mut result.accepted),
        }
        self.drain_deferred(&mut result);
        result
    }

    fn check(&self, m: &Msg) -> std::result::Result<(), RejectReason> {
        if !m.readers.contains(&m.author) {
            return Err(RejectReason::NotAReader);
        }
        let parents: Vec<&MsgId> = m.parents.iter().collect();
        for (i, a) in parents.iter().enumerate() {
            for b in &parents[i + 1..] {
                if self.reaches(a, b) || self.reaches(b, a) {
                    return Err(RejectReason::AntiChain);
                }
            }
        }
        if let Some(last) = self.last_by_author.get(&m.author) {
            let extends =
                m.parents.contains(last) || m.parents.iter().any(|p| self.reaches(p, last));
            if !extends {
                return Err(RejectReason::AuthorFork);
            }
        }
        if m.kind == MsgKind::Content && self.fin_by.contains(&m.author) {
            return Err(RejectReason::ContentAfterFin);
        }
        Ok(())
    }

    fn insert(&mut self, m: Msg, accepted: &mut Vec<Msg>) {
        let id = m.id;
        for p in &m.parents {
            self.frontier.remove(p);
            self.children.entry(*p).or_default().insert(id);
        }
        self.frontier.insert(id);
        self.last_by_author.insert(m.author.clone(), id);
        if m.kind == MsgKind::Fin {
            self.fin_by.insert(m.author.clone());
        }
        self.order.push(id);
        self.nodes.insert(id, m.clone());
        accepted.push(m);
    }

    fn drain_deferred(&mut self, result: &mut AddResult) {
        let mut queue: VecDeque<MsgId> = result.accepted.iter().map(|m| m.id).collect();
        while let Some(done) = queue.pop_front() {
            let ready: Vec<MsgId> = self
                .deferred
                .iter()
                .filter(|(_, d)| {
                    d.msg.parents.contains(&done)
                        && d.msg.parents.iter().all(|p| self.nodes.contains_key(p))
                })
                .map(|(id, _)| *id)
                .collect();
            for id in ready {
                let d = self.deferred.remove(&id).expect("listed above");
                match self.check(&d.msg) {
                    Ok(()) => {
                        self.insert(d.msg, &mut result.accepted);
                        queue.push_back(id);
                    }
                    Err(reason) => result.rejected.push((id, reason)),
                }
            }
        }
    }

    /// Deferred messages waiting for longer than `timeout`, each reported
    /// once.
    pub fn stale_deferred(&mut self, now: u64, timeout: u64) -> Vec<MsgId> {
        let mut out = Vec::new();
        for (id, d) in self.deferred.iter_mut() {
            if !d.warned && now.saturating_sub(d.since) > timeout {
                d.warned = true;
                out.push(*id);
            }
        }
        out
    }

    /// Graphviz rendering of the DAG, edges pointing from child to parent.
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("digraph \"{}\" {{\n  rankdir=BT;\n", name.replace('"', "'"));
        for m in self.messages() {
            let label = match m.kind {
                MsgKind::Content => {
                    let text = m.text().unwrap_or("");
                    let text: String = text.chars().take(24).collect();
                    format!("{}: {}", m.author, text.replace('"', "'"))
                }
                k => format!("{}: [{}]", m.author, k.as_str()),
            };
            s.push_str(&format!(
                "  \"{}\" [label=\"{}\\n{}\"];\n",
                m.id.short(),
                label,
                m.id.short()
            ));
            for p in &m.parents {
                s.push_str(&format!("  \"{}\" -> \"{}\";\n", m.id.short(), p.short()));
            }
        }
        s.push_str("}\n");
        s
    }
}

/// One user-visible line in a [`MessageLog`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub id: MsgId,
    pub author: UserId,
    pub text: String,
    pub readers: BTreeSet<UserId>,
}

/// Content messages of several subsessions, each linearised, in subsession
/// creation order.
#[derive(Debug, Clone, Default)]
pub struct MessageLog {
    sections: Vec<([u8; 32], Vec<LogEntry>)>,
}

impl MessageLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Refreshes the section for subsession `sid` from its transcript, adding
    /// a new section at the end if this subsession is new to the log.
    ///
    /// Ties between causally unrelated messages are broken by local
    /// acceptance order and then by id, so the result is deterministic per
    /// member but may differ between members.
    pub fn append_subsession(&mut self, sid: [u8; 32], t: &Transcript) {
        let entries = linearize(t)
            .into_iter()
            .filter_map(|id| {
                let m = t.get(&id)?;
                Some(LogEntry {
                    id,
                    author: m.author.clone(),
                    text: m.text()?.to_owned(),
                    readers: m.readers.clone(),
                })
            })
            .collect();
        match self.sections.iter_mut().find(|(s, _)| *s == sid) {
            Some((_, e)) => *e = entries,
            None => self.sections.push((sid, entries)),
        }
    }

    /// Sections in order, each with its subsession id.
    pub fn sections(&self) -> impl Iterator<Item = (&[u8; 32], &[LogEntry])> {
        self.sections.iter().map(|(sid, e)| (sid, e.as_slice()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &LogEntry> {
        self.sections.iter().flat_map(|(_, e)| e.iter())
    }

    pub fn len(&self) -> usize {
        self.sections.iter().map(|(_, e)| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.sections.clear();
    }
}

/// Kahn's algorithm over the transcript, picking the ready message with the
/// smallest (acceptance index, id).
pub fn linearize(t: &Transcript) -> Vec<MsgId> {
    let index: BTreeMap<MsgId, usize> =
        t.order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut indegree: BTreeMap<MsgId, usize> = t
        .nodes
        .iter()
        .map(|(id, m)| (*id, m.parents.len()))
        .collect();
    let mut ready: BTreeSet<(usize, MsgId)> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| (index[id], *id))
        .collect();
    let mut out = Vec::with_capacity(t.len());
    while let Some(first) = ready.pop_first() {
        let (_, id) = first;
        out.push(id);
        for c in t.children.get(&id).into_iter().flatten() {
            let d = indegree.get_mut(c).expect("child is a node");
            *d -= 1;
            if *d == 0 {
                ready.insert((index[c], *c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn id(n: u32) -> MsgId {
        let mut b = [0u8; 32];
        b[..4].copy_from_slice(&n.to_be_bytes());
        MsgId(b)
    }

    fn msg(n: u32, author: &str, parents: &[u32]) -> Msg {
        Msg {
            id: id(n),
            author: author.into(),
            readers: ["a", "b", "c", "d"]
                .iter()
                .map(|s| UserId::from(*s))
                .collect(),
            parents: parents.iter().map(|p| id(*p)).collect(),
            body: format!("m{n}").into_bytes(),
            kind: MsgKind::Content,
        }
    }

    #[test]
    fn classify_bodies() {
        assert_eq!(MsgKind::classify(b""), Ok(MsgKind::Ack));
        assert_eq!(MsgKind::classify(&[0, 1]), Ok(MsgKind::Fin));
        assert_eq!(MsgKind::classify(b"hi"), Ok(MsgKind::Content));
        assert!(MsgKind::classify(&[0, 2]).is_err());
        assert!(MsgKind::classify(&[0xff]).is_err());
    }

    #[test]
    fn anti_chain_violation_rejected() {
        let mut t = Transcript::new();
        t.add(msg(1, "a", &[]), 0);
        t.add(msg(2, "b", &[1]), 0);
        let r = t.add(msg(3, "c", &[1, 2]), 0);
        assert_eq!(r.status, AddStatus::Rejected(RejectReason::AntiChain));
        assert!(!t.contains(&id(3)));
    }

    #[test]
    fn author_fork_rejected() {
        let mut t = Transcript::new();
        t.add(msg(1, "a", &[]), 0);
        assert_eq!(t.add(msg(2, "b", &[1]), 0).status, AddStatus::Accepted);
        let r = t.add(msg(3, "b", &[1]), 0);
        assert_eq!(r.status, AddStatus::Rejected(RejectReason::AuthorFork));
    }

    #[test]
    fn duplicate_rejected_and_counted() {
        let mut t = Transcript::new();
        t.add(msg(1, "a", &[]), 0);
        assert_eq!(
            t.add(msg(1, "a", &[]), 0).status,
            AddStatus::Rejected(RejectReason::Duplicate)
        );
        assert_eq!(t.duplicates_seen(), 1);
    }

    #[test]
    fn content_after_fin_rejected() {
        let mut t = Transcript::new();
        let mut fin = msg(1, "a", &[]);
        fin.kind = MsgKind::Fin;
        fin.body = vec![0, 1];
        t.add(fin, 0);
        assert_eq!(
            t.add(msg(2, "a", &[1]), 0).status,
            AddStatus::Rejected(RejectReason::ContentAfterFin)
        );
        let mut ack = msg(3, "a", &[1]);
        ack.kind = MsgKind::Ack;
        ack.body.clear();
        assert_eq!(t.add(ack, 0).status, AddStatus::Accepted);
    }

    #[test]
    fn deferral_then_release() {
        let mut t = Transcript::new();
        assert_eq!(t.add(msg(2, "b", &[1]), 0).status, AddStatus::Deferred);
        assert_eq!(t.add(msg(3, "c", &[2]), 0).status, AddStatus::Deferred);
        let waiting: Vec<(MsgId, Vec<MsgId>)> = t.deferred().map(|(m, p)| (m.id, p)).collect();
        assert!(waiting.contains(&(id(2), vec![id(1)])));
        assert!(waiting.contains(&(id(3), vec![id(2)])));
        let r = t.add(msg(1, "a", &[]), 1);
        assert_eq!(r.status, AddStatus::Accepted);
        assert_eq!(
            r.accepted.iter().map(|m| m.id).collect::<Vec<_>>(),
            vec![id(1), id(2), id(3)]
        );
        assert_eq!(t.deferred_len(), 0);
    }

    #[test]
    fn frontier_shapes() {
        let mut t = Transcript::new();
        assert!(t.frontier().is_empty());
        t.add(msg(1, "a", &[]), 0);
        t.add(msg(2, "a", &[1]), 0);
        assert_eq!(t.frontier(), &BTreeSet::from([id(2)]));
        t.add(msg(3, "b", &[1]), 0);
        assert_eq!(t.frontier(), &BTreeSet::from([id(2), id(3)]));
    }

    #[test]
    fn ancestry_queries() {
        let mut t = Transcript::new();
        t.add(msg(1, "a", &[]), 0);
        t.add(msg(2, "b", &[1]), 0);
        t.add(msg(3, "c", &[2]), 0);
        assert_eq!(t.is_ancestor(&id(1), &id(3)), Ok(true));
        assert_eq!(t.is_ancestor(&id(3), &id(1)), Ok(false));
        assert_eq!(t.is_ancestor(&id(1), &id(9)), Err(Error::NotFound));
        assert!(t.has_seen(&"c".into(), &id(1)));
        assert!(!t.has_seen(&"d".into(), &id(1)));
    }

    /// Builds a random valid DAG: each message picks an antichain of parents
    /// from the current state and extends its author's line.
    fn random_dag(rng: &mut ChaCha20Rng, n: u32) -> Vec<Msg> {
        let authors = ["a", "b", "c", "d"];
        let mut t = Transcript::new();
        let mut out = Vec::new();
        for k in 1..=n {
            let author = authors[rng.gen_range(0..4)];
            // Start from the frontier, optionally drop some leaves, but keep
            // the author's own line intact.
            let mut parents: Vec<MsgId> = t.frontier().iter().copied().collect();
            parents.retain(|_| rng.gen_bool(0.7));
            if let Some(last) = t.last_by(&author.into()).copied() {
                if !parents.iter().any(|p| *p == last || t.reaches(p, &last)) {
                    parents.retain(|p| !t.reaches(&last, p));
                    parents.push(last);
                }
            }
            // Reduce to an antichain.
            let snapshot = parents.clone();
            parents.retain(|p| !snapshot.iter().any(|q| q != p && t.reaches(q, p)));
            let mut m = msg(k, author, &[]);
            m.parents = parents.into_iter().collect();
            let r = t.add(m.clone(), 0);
            assert_eq!(
                r.status,
                AddStatus::Accepted,
                "generator produced invalid message {k}"
            );
            out.push(m);
        }
        out
    }

    fn closure_oracle(msgs: &[Msg]) -> BTreeSet<(MsgId, MsgId)> {
        let mut rel: BTreeSet<(MsgId, MsgId)> = msgs
            .iter()
            .flat_map(|m| m.parents.iter().map(move |p| (*p, m.id)))
            .collect();
        loop {
            let extra: Vec<_> = rel
                .iter()
                .flat_map(|(a, b)| {
                    rel.iter()
                        .filter(move |(c, _)| c == b)
                        .map(move |(_, d)| (*a, *d))
                })
                .filter(|e| !rel.contains(e))
                .collect();
            if extra.is_empty() {
                return rel;
            }
            rel.extend(extra);
        }
    }

    #[test]
    fn ancestry_matches_closure_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..10 {
            let msgs = random_dag(&mut rng, 40);
            let mut t = Transcript::new();
            for m in &msgs {
                t.add(m.clone(), 0);
            }
            let rel = closure_oracle(&msgs);
            for a in &msgs {
                for b in &msgs {
                    assert_eq!(
                        t.is_ancestor(&a.id, &b.id).unwrap(),
                        rel.contains(&(a.id, b.id))
                    );
                }
            }
        }
    }

    #[test]
    fn shuffled_delivery_gives_same_graph() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..20 {
            let msgs = random_dag(&mut rng, 50);
            let mut reference = Transcript::new();
            for m in &msgs {
                reference.add(m.clone(), 0);
            }
            let mut shuffled = msgs.clone();
            shuffled.shuffle(&mut rng);
            let mut t = Transcript::new();
            for m in shuffled {
                t.add(m, 0);
            }
            assert_eq!(t.graph(), reference.graph());
            assert_eq!(t.deferred_len(), 0);
        }
    }

    #[test]
    fn linearization_is_linear_extension() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let msgs = random_dag(&mut rng, 50);
        let mut shuffled = msgs.clone();
        shuffled.shuffle(&mut rng);
        let mut t = Transcript::new();
        for m in shuffled {
            t.add(m, 0);
        }
        let lin = linearize(&t);
        assert_eq!(lin.len(), 50);
        let pos: BTreeMap<MsgId, usize> = lin.iter().enumerate().map(|(i, x)| (*x, i)).collect();
        for m in &msgs {
            for p in &m.parents {
                assert!(pos[p] < pos[&m.id]);
            }
        }
    }

    #[test]
    fn log_filters_control_and_orders_sections() {
        let mut t1 = Transcript::new();
        t1.add(msg(1, "a", &[]), 0);
        t1.add(msg(2, "b", &[1]), 0);
        t1.add(msg(3, "c", &[1]), 0);
        let mut ack = msg(4, "d", &[2, 3]);
        ack.kind = MsgKind::Ack;
        ack.body.clear();
        t1.add(ack, 0);
        let mut t2 = Transcript::new();
        t2.add(msg(10, "a", &[]), 0);
        let mut log = MessageLog::new();
        log.append_subsession([1; 32], &t1);
        log.append_subsession([2; 32], &t2);
        let ids: Vec<MsgId> = log.entries().map(|e| e.id).collect();
        assert_eq!(ids, vec![id(1), id(2), id(3), id(10)]);

        let mut only_acks = Transcript::new();
        let mut a = msg(20, "a", &[]);
        a.kind = MsgKind::Ack;
        only_acks.add(a, 0);
        let mut log2 = MessageLog::new();
        log2.append_subsession([3; 32], &only_acks);
        assert!(log2.is_empty());
    }

    #[test]
    fn stale_deferred_reported_once() {
        let mut t = Transcript::new();
        t.add(msg(2, "b", &[1]), 5);
        assert!(t.stale_deferred(10, 64).is_empty());
        assert_eq!(t.stale_deferred(70, 64), vec![id(2)]);
        assert!(t.stale_deferred(200, 64).is_empty());
    }

    #[test]
    fn dot_export_mentions_every_edge() {
        let mut t = Transcript::new();
        t.add(msg(1, "a", &[]), 0);
        t.add(msg(2, "b", &[1]), 0);
        let dot = t.to_dot("s");
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains(&format!("\"{}\" -> \"{}\"", id(2).short(), id(1).short())));
    }
}
