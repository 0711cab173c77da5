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

//! Ordering of membership operations.
//!
//! Every operation's initial packet names the final packet of the operation
//! before it (PREV_PF). Members accept the earliest initial packet in channel
//! order that extends their last completed operation while nothing else is
//! running, and reject every other one. Since the channel delivers the same
//! order to everyone, all members accept the same operations.
//!
//! Accepted operations are folded into a chain hash,
//! `H(prev || packet bytes)` over the initial and final packet of each
//! completed operation. Initial packets carry the proposer's chain hash so
//! that members can cross-check their histories and joiners can seed theirs.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::codec::PacketId;
use crate::greeter::InitialInfo;
use crate::types::UserId;

pub type ChainHash = [u8; 32];

pub fn update_chain_hash(prev: &ChainHash, packet_bytes: &[u8]) -> ChainHash {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(packet_bytes);
    h.finalize().into()
}

/// The chain hash before any operation: the hash of the first operation's
/// PREV_PF string.
pub fn genesis_chain_hash(prev_pf: &[u8; 32]) -> ChainHash {
    Sha256::digest(prev_pf).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectCause {
    /// PREV_PF does not name our last completed operation.
    StalePrevPf,
    /// Another operation is still running.
    OpInProgress,
    /// A not-yet-joined member saw an earlier initial with this PREV_PF.
    AlreadyClaimed,
    /// A not-yet-joined member is not a target of this operation.
    NotTargeted,
    /// Some target is not in the channel.
    TargetAbsent,
}

impl RejectCause {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCause::StalePrevPf => "stale-prev-pf",
            RejectCause::OpInProgress => "op-in-progress",
            RejectCause::AlreadyClaimed => "already-claimed",
            RejectCause::NotTargeted => "not-targeted",
            RejectCause::TargetAbsent => "target-absent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject(RejectCause),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedOp {
    pub initial: PacketId,
    pub final_packet: Option<PacketId>,
}

#[derive(Debug, Clone)]
struct Running {
    initial: PacketId,
    initial_bytes: Vec<u8>,
    base_chain: ChainHash,
}

#[derive(Debug, Clone)]
enum Sync {
    /// Not part of any agreed history yet. `genesis` is the PREV_PF we use
    /// for our own first proposal.
    Unsynced { genesis: [u8; 32] },
    Synced {
        last_final: [u8; 32],
        chain: ChainHash,
    },
}

#[derive(Debug, Clone)]
pub struct ServerOrder {
    sync: Sync,
    running: Option<Running>,
    accepted: Vec<AcceptedOp>,
    claimed: BTreeSet<[u8; 32]>,
    history: BTreeMap<[u8; 32], ChainHash>,
}

impl ServerOrder {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut genesis = [0u8; 32];
        rng.fill_bytes(&mut genesis);
        ServerOrder {
            sync: Sync::Unsynced { genesis },
            running: None,
            accepted: Vec::new(),
            claimed: BTreeSet::new(),
            history: BTreeMap::new(),
        }
    }

    /// Forgets all history, as after leaving a session.
    pub fn reset<R: RngCore + CryptoRng>(&mut self, rng: &mut R) {
        *self = ServerOrder::new(rng);
    }

    pub fn is_synced(&self) -> bool {
        matches!(self.sync, Sync::Synced { .. })
    }

    pub fn in_progress(&self) -> Option<&PacketId> {
        self.running.as_ref().map(|r| &r.initial)
    }

    pub fn accepted_ops(&self) -> &[AcceptedOp] {
        &self.accepted
    }

    /// The (PREV_PF, CHAIN_HASH) pair our next proposal must carry.
    pub fn anchor(&self) -> ([u8; 32], ChainHash) {
        match &self.sync {
            Sync::Unsynced { genesis } => (*genesis, genesis_chain_hash(genesis)),
            Sync::Synced { last_final, chain } => (*last_final, *chain),
        }
    }

    pub fn chain_hash(&self) -> ChainHash {
        self.anchor().1
    }

    /// Decides on an initial packet seen in channel order.
    /// `channel` is the channel membership at the time the packet arrives.
    pub fn try_accept_initial(
        &mut self,
        own: &UserId,
        packet: PacketId,
        packet_bytes: &[u8],
        info: &InitialInfo,
        channel: &BTreeSet<UserId>,
    ) -> Decision {
        if info.members.iter().any(|m| !channel.contains(m)) {
            return Decision::Reject(RejectCause::TargetAbsent);
        }
        let first_claim = self.claimed.insert(info.prev_pf);
        if self.running.is_some() {
            return Decision::Reject(RejectCause::OpInProgress);
        }
        let base_chain = match &self.sync {
            Sync::Synced { last_final, chain } => {
                if info.prev_pf != *last_final {
                    return Decision::Reject(RejectCause::StalePrevPf);
                }
                *chain
            }
            Sync::Unsynced { .. } => {
                if !info.members.contains(own) {
                    return Decision::Reject(RejectCause::NotTargeted);
                }
                if !first_claim {
                    return Decision::Reject(RejectCause::AlreadyClaimed);
                }
                info.chain_hash
            }
        };
        self.history.entry(info.prev_pf).or_insert(base_chain);
        self.running = Some(Running {
            initial: packet,
            initial_bytes: packet_bytes.to_vec(),
            base_chain,
        });
        self.accepted.push(AcceptedOp {
            initial: packet,
            final_packet: None,
        });
        Decision::Accept
    }

    /// Folds the completed operation into the chain hash. A one-packet
    /// operation is hashed once.
    pub fn op_succeeded(&mut self, final_packet: PacketId, final_bytes: &[u8]) {
        let Some(r) = self.running.take() else { return };
        let mut chain = update_chain_hash(&r.base_chain, &r.initial_bytes);
        if final_packet != r.initial {
            chain = update_chain_hash(&chain, final_bytes);
        }
        if let Some(op) = self.accepted.last_mut() {
            op.final_packet = Some(final_packet);
        }
        self.history.insert(final_packet.0, chain);
        self.sync = Sync::Synced {
            last_final: final_packet.0,
            chain,
        };
    }

    /// Abandons the running operation. Our history is unchanged.
    pub fn op_failed(&mut self) {
        if self.running.take().is_some() {
            self.accepted.pop();
        }
    }

    /// Cross-checks a session member's initial packet against our history.
    /// Returns false when the peer's view cannot be reconciled with ours.
    pub fn chain_consistent(&self, info: &InitialInfo) -> bool {
        if !self.is_synced() {
            return true;
        }
        match self.history.get(&info.prev_pf) {
            Some(c) => *c == info.chain_hash,
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greeter::OpKind;
    use crate::types::ids;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn info(prev_pf: [u8; 32], chain: ChainHash, members: &[&str]) -> InitialInfo {
        InitialInfo {
            kind: OpKind::Include,
            source: UserId::from(members[0]),
            members: ids(members.iter().copied()),
            prev_pf,
            chain_hash: chain,
            latest_pm: vec![],
        }
    }

    fn channel(names: &[&str]) -> BTreeSet<UserId> {
        ids(names.iter().copied()).into_iter().collect()
    }

    #[test]
    fn chain_hash_formula() {
        let prev = [0u8; 32];
        let h = update_chain_hash(&prev, b"pkt");
        let mut oracle = Sha256::new();
        oracle.update([0u8; 32]);
        oracle.update(b"pkt");
        assert_eq!(h, <[u8; 32]>::from(oracle.finalize()));
        assert_eq!(
            genesis_chain_hash(&[7; 32]),
            <[u8; 32]>::from(Sha256::digest([7u8; 32]))
        );
    }

    #[test]
    fn empty_history_is_genesis() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let so = ServerOrder::new(&mut rng);
        let (pf, ch) = so.anchor();
        assert_eq!(ch, genesis_chain_hash(&pf));
        assert!(!so.is_synced());
    }

    #[test]
    fn concurrent_initials_first_wins() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let ch = channel(&["a", "b", "c"]);
        // Two synced members plus a joiner, all fed the same order.
        let mut a = ServerOrder::new(&mut rng);
        let pf = a.anchor().0;
        let i0 = info(pf, genesis_chain_hash(&pf), &["a", "b"]);
        a.try_accept_initial(&"a".into(), PacketId([1; 32]), b"i0", &i0, &ch);
        a.op_succeeded(PacketId([2; 32]), b"f0");
        let mut b = a.clone();
        let mut c = ServerOrder::new(&mut rng);
        let (pf, chain) = a.anchor();
        let first = info(pf, chain, &["a", "b", "c"]);
        let second = info(pf, chain, &["b", "a", "c"]);
        for (so, me) in [(&mut a, "a"), (&mut b, "b"), (&mut c, "c")] {
            assert_eq!(
                so.try_accept_initial(&me.into(), PacketId([3; 32]), b"x", &first, &ch),
                Decision::Accept
            );
            assert!(matches!(
                so.try_accept_initial(&me.into(), PacketId([4; 32]), b"y", &second, &ch),
                Decision::Reject(_)
            ));
            so.op_succeeded(PacketId([5; 32]), b"f1");
        }
        assert_eq!(a.chain_hash(), b.chain_hash());
        assert_eq!(a.chain_hash(), c.chain_hash());
        assert!(c.is_synced());
    }

    #[test]
    fn stale_prev_pf_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let ch = channel(&["a", "b"]);
        let mut so = ServerOrder::new(&mut rng);
        let (pf, chain) = so.anchor();
        so.try_accept_initial(
            &"a".into(),
            PacketId([1; 32]),
            b"i",
            &info(pf, chain, &["a", "b"]),
            &ch,
        );
        so.op_succeeded(PacketId([2; 32]), b"f");
        let stale = info(pf, chain, &["a", "b"]);
        assert_eq!(
            so.try_accept_initial(&"a".into(), PacketId([9; 32]), b"s", &stale, &ch),
            Decision::Reject(RejectCause::StalePrevPf)
        );
        assert!(so.chain_consistent(&stale));
        let mut forged = stale.clone();
        forged.chain_hash = [0xee; 32];
        assert!(!so.chain_consistent(&forged));
        let unknown = info([0x55; 32], [0; 32], &["a", "b"]);
        assert!(!so.chain_consistent(&unknown));
    }

    #[test]
    fn one_packet_operation_hashed_once() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let ch = channel(&["a"]);
        let mut so = ServerOrder::new(&mut rng);
        let (pf, chain) = so.anchor();
        so.try_accept_initial(
            &"a".into(),
            PacketId([1; 32]),
            b"only",
            &info(pf, chain, &["a"]),
            &ch,
        );
        so.op_succeeded(PacketId([1; 32]), b"only");
        assert_eq!(so.chain_hash(), update_chain_hash(&chain, b"only"));
    }

    #[test]
    fn failed_operation_leaves_history() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let ch = channel(&["a", "b"]);
        let mut so = ServerOrder::new(&mut rng);
        let (pf, chain) = so.anchor();
        so.try_accept_initial(
            &"a".into(),
            PacketId([1; 32]),
            b"i",
            &info(pf, chain, &["a", "b"]),
            &ch,
        );
        so.op_succeeded(PacketId([2; 32]), b"f");
        let before = so.anchor();
        let (pf, chain) = so.anchor();
        so.try_accept_initial(
            &"a".into(),
            PacketId([3; 32]),
            b"j",
            &info(pf, chain, &["a", "b"]),
            &ch,
        );
        assert!(so.in_progress().is_some());
        so.op_failed();
        assert_eq!(so.anchor(), before);
        assert_eq!(so.accepted_ops().len(), 1);
    }

    #[test]
    fn absent_target_is_ignored_by_everyone() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut so = ServerOrder::new(&mut rng);
        let (pf, chain) = so.anchor();
        let i = info(pf, chain, &["a", "z"]);
        assert_eq!(
            so.try_accept_initial(&"a".into(), PacketId([1; 32]), b"i", &i, &channel(&["a"])),
            Decision::Reject(RejectCause::TargetAbsent)
        );
        // It did not claim the PREV_PF.
        assert_eq!(
            so.try_accept_initial(
                &"a".into(),
                PacketId([2; 32]),
                b"i",
                &info(pf, chain, &["a"]),
                &channel(&["a"])
            ),
            Decision::Accept
        );
    }
}
