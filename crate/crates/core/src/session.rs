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

//! The user-facing session.
//!
//! A [`Session`] consumes channel events and user actions and produces
//! notices plus channel actions. It owns the current subsession, any previous
//! subsessions still shutting down, at most one running membership operation
//! and the operation resolver.
//!
//! Received packets go through a fixed pipeline:
//!
//! 1. channel membership changes apply the transport integration rules;
//! 2. greeting packets go to the resolver, then to the running operation;
//! 3. data packets are tried against the current subsession;
//! 4. then against previous subsessions;
//! 5. anything still unreadable waits in a retry queue until new keys arrive
//!    or it has waited too long.
//!
//! Sessions never block and never read a clock. The caller supplies the
//! logical time with every input.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::rc::Rc;

use ed25519_dalek::SigningKey;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::codec::{MessageType, PacketId, WirePacket};
use crate::error::{Error, Result};
use crate::greeter::{
    greeter_codec_initial, parse_greeting, AgreementState, GreetCtx, Greeting, GreetingStatus,
    OpKind, Proposal,
};
use crate::identity::IdentityProvider;
use crate::liveness::{Action, ConsistencyMonitor, FlowPolicy};
use crate::message_security::{encrypt_message, verify_decrypt_relayed, Plaintext, SubsessionKeys};
use crate::observable::{Completion, Observable, Subscription};
use crate::server_order::{Decision, ServerOrder};
use crate::transcript::{AddStatus, MessageLog, Msg, MsgId, MsgKind, Transcript};
use crate::types::{UserId, WarningCode};

/// What the transport delivers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelEvent {
    Packet {
        sender: UserId,
        packet: WirePacket,
    },
    Membership {
        joined: Vec<UserId>,
        left: Vec<UserId>,
    },
}

/// What a session asks of the transport. The transport may ignore any of
/// these or satisfy them exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelAction {
    Send(WirePacket),
    Join,
    Leave,
    Kick(Vec<UserId>),
}

/// User-level inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionAction {
    SendMessage(String),
    /// Both empty means refresh.
    ChangeMembership {
        include: Vec<UserId>,
        exclude: Vec<UserId>,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum OpOutcome {
    Succeeded { members: Vec<UserId> },
    Failed { reason: String },
    Rejected { cause: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "notice", rename_all = "kebab-case")]
pub enum Notice {
    MessageAccepted {
        subsession: String,
        id: String,
        author: UserId,
        text: String,
        parents: Vec<String>,
        readers: Vec<UserId>,
    },
    MembershipChanged {
        subsession: String,
        members: Vec<UserId>,
    },
    ChannelChanged {
        joined: Vec<UserId>,
        left: Vec<UserId>,
    },
    OperationStarted {
        op: String,
        kind: String,
        initiator: UserId,
        members: Vec<UserId>,
    },
    OperationSucceeded {
        op: String,
        kind: String,
        members: Vec<UserId>,
    },
    OperationFailed {
        op: String,
        reason: String,
    },
    OperationRejected {
        op: String,
        initiator: UserId,
        cause: String,
    },
    SubsessionClosed {
        subsession: String,
        clean: bool,
    },
    SecurityWarning {
        code: WarningCode,
        detail: String,
        members: Vec<UserId>,
    },
}

fn short(bytes: &[u8]) -> String {
    hex::encode(&bytes[..4])
}

struct Subsession {
    keys: SubsessionKeys,
    agreement: Option<AgreementState>,
    transcript: Transcript,
    monitor: ConsistencyMonitor,
    packets: BTreeMap<MsgId, WirePacket>,
    own_fin: Option<(MsgId, u64)>,
    /// Members of the subsession we joined from; their unreadable packets
    /// belong to a subsession we were never part of.
    predecessors: BTreeSet<UserId>,
}

impl Subsession {
    fn new(
        keys: SubsessionKeys,
        agreement: Option<AgreementState>,
        policy: FlowPolicy,
        now: u64,
    ) -> Self {
        let monitor = ConsistencyMonitor::new(
            keys.own_id.clone(),
            keys.members.iter().cloned(),
            policy,
            now,
        );
        Subsession {
            keys,
            agreement,
            transcript: Transcript::new(),
            monitor,
            packets: BTreeMap::new(),
            own_fin: None,
            predecessors: BTreeSet::new(),
        }
    }

    fn sid(&self) -> String {
        short(&self.keys.sid)
    }

    fn is_shared(&self) -> bool {
        self.keys.members.len() > 1
    }

    fn fin_settled(&self) -> bool {
        match &self.own_fin {
            Some((id, _)) => self.monitor.is_fully_acked(id),
            None => !self.is_shared(),
        }
    }
}

struct ActiveOp {
    greeting: Greeting,
    started_at: u64,
    handle: Option<Completion<OpOutcome>>,
    /// Members that already shared a subsession before this operation.
    old_members: Vec<UserId>,
    joining: bool,
}

struct PendingProposal {
    greeting: Greeting,
    initial: PacketId,
    handle: Completion<OpOutcome>,
    sent_at: u64,
}

struct Retry {
    sender: UserId,
    packet: WirePacket,
    since: u64,
}

const ARCHIVE_LEN: usize = 8;

/// One member's protocol engine.
pub struct Session {
    own_id: UserId,
    identity: SigningKey,
    directory: Rc<dyn IdentityProvider>,
    policy: FlowPolicy,
    rng: ChaCha20Rng,
    now: u64,

    channel: BTreeSet<UserId>,
    in_channel: bool,
    order: ServerOrder,
    current: Subsession,
    previous: Vec<Subsession>,
    archive: VecDeque<SubsessionKeys>,
    op: Option<ActiveOp>,
    proposal: Option<PendingProposal>,
    excluded: bool,
    leaving: Option<u64>,
    leave_sent: bool,
    auto_exclude: BTreeSet<UserId>,
    retry: Vec<Retry>,

    log: MessageLog,
    key_history: Vec<SubsessionKeys>,
    notices: VecDeque<Notice>,
    outbox: VecDeque<ChannelAction>,
    observers: Observable<Notice>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("own_id", &self.own_id)
            .field("now", &self.now)
            .field("members", &self.current.keys.members)
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(
        own_id: UserId,
        identity: SigningKey,
        directory: Rc<dyn IdentityProvider>,
        policy: FlowPolicy,
        mut rng: ChaCha20Rng,
    ) -> Self {
        let keys = SubsessionKeys::solo(own_id.clone(), &mut rng);
        let order = ServerOrder::new(&mut rng);
        let current = Subsession::new(keys.clone(), None, policy, 0);
        Session {
            own_id,
            identity,
            directory,
            policy,
            rng,
            now: 0,
            channel: BTreeSet::new(),
            in_channel: false,
            order,
            current,
            previous: Vec::new(),
            archive: VecDeque::new(),
            op: None,
            proposal: None,
            excluded: false,
            leaving: None,
            leave_sent: false,
            auto_exclude: BTreeSet::new(),
            retry: Vec::new(),
            log: MessageLog::new(),
            key_history: vec![keys],
            notices: VecDeque::new(),
            outbox: VecDeque::new(),
            observers: Observable::new(),
        }
    }

    /// Convenience constructor with a seeded random source.
    pub fn with_seed(
        own_id: UserId,
        identity: SigningKey,
        directory: Rc<dyn IdentityProvider>,
        policy: FlowPolicy,
        seed: u64,
    ) -> Self {
        Self::new(
            own_id,
            identity,
            directory,
            policy,
            ChaCha20Rng::seed_from_u64(seed),
        )
    }

    // ----- queries -------------------------------------------------------

    pub fn own_id(&self) -> &UserId {
        &self.own_id
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn policy(&self) -> &FlowPolicy {
        &self.policy
    }

    pub fn in_channel(&self) -> bool {
        self.in_channel
    }

    pub fn channel_members(&self) -> &BTreeSet<UserId> {
        &self.channel
    }

    /// Members of the current subsession, ourselves included.
    pub fn members(&self) -> &[UserId] {
        &self.current.keys.members
    }

    /// Whether we share the current subsession with nobody.
    pub fn is_solo(&self) -> bool {
        !self.current.is_shared()
    }

    pub fn current_keys(&self) -> &SubsessionKeys {
        &self.current.keys
    }

    /// Every key set this session has held, oldest first.
    pub fn key_history(&self) -> &[SubsessionKeys] {
        &self.key_history
    }

    pub fn group_secret(&self) -> Option<[u8; 32]> {
        self.current
            .agreement
            .as_ref()
            .and_then(|a| a.gka.group_secret().copied())
    }

    pub fn agreement(&self) -> Option<&AgreementState> {
        self.current.agreement.as_ref()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.current.transcript
    }

    pub fn previous_transcripts(&self) -> impl Iterator<Item = &Transcript> {
        self.previous.iter().map(|s| &s.transcript)
    }

    pub fn message_log(&self) -> MessageLog {
        let mut log = self.log.clone();
        for s in self.previous.iter().chain(std::iter::once(&self.current)) {
            log.append_subsession(s.keys.sid, &s.transcript);
        }
        log
    }

    pub fn chain_hash(&self) -> [u8; 32] {
        self.order.chain_hash()
    }

    pub fn server_order(&self) -> &ServerOrder {
        &self.order
    }

    pub fn op_in_progress(&self) -> bool {
        self.op.is_some()
    }

    pub fn is_excluded(&self) -> bool {
        self.excluded
    }

    pub fn unacked(&self) -> Vec<MsgId> {
        self.current.monitor.unacked()
    }

    pub fn retry_queue_len(&self) -> usize {
        self.retry.len()
    }

    pub fn drain_notices(&mut self) -> Vec<Notice> {
        self.notices.drain(..).collect()
    }

    pub fn drain_outbox(&mut self) -> Vec<ChannelAction> {
        self.outbox.drain(..).collect()
    }

    pub fn subscribe(&self, f: impl FnMut(&Notice) + 'static) -> Subscription {
        self.observers.subscribe(f)
    }

    fn emit(&mut self, n: Notice) {
        self.observers.publish(&n);
        self.notices.push_back(n);
    }

    fn warn(&mut self, code: WarningCode, detail: String, members: Vec<UserId>) {
        self.emit(Notice::SecurityWarning {
            code,
            detail,
            members,
        });
    }

    // ----- user actions --------------------------------------------------

    /// Asks the transport to put us in the channel.
    pub fn join_channel(&mut self) {
        self.outbox.push_back(ChannelAction::Join);
    }

    pub fn execute(
        &mut self,
        now: u64,
        action: SessionAction,
    ) -> Result<Option<Completion<OpOutcome>>> {
        self.now = self.now.max(now);
        match action {
            SessionAction::SendMessage(text) => self.send_message(&text).map(|_| None),
            SessionAction::ChangeMembership { include, exclude } => {
                self.propose_change(&include, &exclude).map(Some)
            }
            SessionAction::Shutdown => self.shutdown().map(|_| None),
        }
    }

    /// Sends a content message to the current subsession.
    pub fn send_message(&mut self, text: &str) -> Result<MsgId> {
        if text.is_empty() {
            return Err(Error::Rejected("empty message"));
        }
        if self.excluded {
            return Err(Error::Rejected("excluded from the session"));
        }
        if self.leaving.is_some() || self.current.own_fin.is_some() {
            return Err(Error::Rejected("already shut down"));
        }
        self.author(None, text.as_bytes().to_vec())
    }

    /// Proposes a membership change. Empty `include` and `exclude` means a
    /// key refresh.
    pub fn propose_change(
        &mut self,
        include: &[UserId],
        exclude: &[UserId],
    ) -> Result<Completion<OpOutcome>> {
        if exclude.contains(&self.own_id) {
            return Err(Error::SelfExclusion);
        }
        if self.op.is_some() || self.proposal.is_some() {
            return Err(Error::Busy);
        }
        if !self.in_channel || self.excluded || self.leaving.is_some() {
            return Err(Error::Rejected("not able to change membership now"));
        }
        if !include.is_empty() && !exclude.is_empty() {
            return Err(Error::Rejected(
                "include and exclude must be separate operations",
            ));
        }
        let members = &self.current.keys.members;
        if include
            .iter()
            .any(|m| members.contains(m) || *m == self.own_id)
        {
            return Err(Error::InvalidMembers("included member already present"));
        }
        if exclude.iter().any(|m| !members.contains(m)) {
            return Err(Error::InvalidMembers("excluded member not present"));
        }
        let kind = match (
            include.is_empty(),
            exclude.is_empty(),
            self.current.agreement.is_some(),
        ) {
            (false, _, false) => OpKind::Establish,
            (false, _, true) => OpKind::Include,
            (true, false, _) => OpKind::Exclude,
            (true, true, true) => OpKind::Refresh,
            (true, true, false) => return Err(Error::Rejected("nothing to refresh")),
        };
        let (prev_pf, chain_hash) = self.order.anchor();
        let latest_pm = self.current.transcript.frontier().iter().copied().collect();
        let proposal = Proposal {
            kind,
            include,
            exclude,
            prev_pf,
            chain_hash,
            latest_pm,
        };
        let ctx = GreetCtx {
            identity: &self.identity,
            directory: &*self.directory,
        };
        let (greeting, packet) = Greeting::propose(
            &self.own_id,
            self.current.agreement.as_ref(),
            &proposal,
            &ctx,
            &mut self.rng,
        )?;
        let handle = Completion::new();
        self.proposal = Some(PendingProposal {
            greeting,
            initial: packet.id,
            handle: handle.clone(),
            sent_at: self.now,
        });
        self.outbox.push_back(ChannelAction::Send(packet));
        Ok(handle)
    }

    /// Starts a formal shutdown: FIN, wait for it to be acknowledged, then
    /// leave the channel.
    pub fn shutdown(&mut self) -> Result<()> {
        if self.leaving.is_some() {
            return Err(Error::Rejected("already leaving"));
        }
        self.leaving = Some(self.now);
        if self.current.is_shared() && self.current.own_fin.is_none() && !self.excluded {
            self.author(None, MsgKind::Fin.control_body().to_vec())?;
        }
        Ok(())
    }

    // ----- channel input -------------------------------------------------

    pub fn handle_channel_event(&mut self, now: u64, ev: ChannelEvent) {
        self.now = self.now.max(now);
        match ev {
            ChannelEvent::Membership { joined, left } => self.on_membership(joined, left),
            ChannelEvent::Packet { sender, packet } => match packet.message_type() {
                Some(MessageType::Greeting) => self.on_greeting(sender, packet),
                _ => self.on_data(sender, packet),
            },
        }
    }

    fn on_membership(&mut self, joined: Vec<UserId>, left: Vec<UserId>) {
        for j in &joined {
            self.channel.insert(j.clone());
            if *j == self.own_id {
                self.in_channel = true;
            }
        }
        for l in &left {
            self.channel.remove(l);
        }
        self.emit(Notice::ChannelChanged {
            joined,
            left: left.clone(),
        });
        if left.contains(&self.own_id) {
            self.in_channel = false;
            self.reset_solo();
            return;
        }
        for l in &left {
            if self
                .op
                .as_ref()
                .is_some_and(|op| op.greeting.targets().contains(l))
            {
                self.fail_op(Error::Rejected("a participant left the channel"), None);
            }
            self.current.monitor.remove_reader(l);
            for p in &mut self.previous {
                p.monitor.remove_reader(l);
            }
            if self.current.keys.members.contains(l) && !self.excluded {
                self.auto_exclude.insert(l.clone());
            }
        }
        self.try_auto_exclude();
    }

    /// The lexically smallest member still present proposes excluding
    /// members who left the channel, once no operation is running.
    fn try_auto_exclude(&mut self) {
        let members = self.current.keys.members.clone();
        self.auto_exclude
            .retain(|m| members.contains(m) && !self.channel.contains(m));
        if self.auto_exclude.is_empty()
            || self.op.is_some()
            || self.proposal.is_some()
            || self.excluded
        {
            return;
        }
        let responsible = members.iter().filter(|m| self.channel.contains(*m)).min();
        if responsible != Some(&self.own_id) {
            return;
        }
        let exclude: Vec<UserId> = self.auto_exclude.iter().cloned().collect();
        // Failure here is retried on a later tick.
        let _ = self.propose_change(&[], &exclude);
    }

    fn on_greeting(&mut self, sender: UserId, packet: WirePacket) {
        if let Some(info) = greeter_codec_initial(&packet) {
            self.on_initial(sender, packet, info);
            return;
        }
        if self.excluded {
            return;
        }
        let Some(op) = self.op.as_ref() else { return };
        let is_target = op.greeting.targets().contains(&sender);
        match parse_greeting(&packet) {
            Ok(fields) => {
                if !is_target && fields.members != op.greeting.targets() {
                    return;
                }
                self.feed_op(sender, packet, fields);
            }
            Err(e) => {
                if is_target {
                    self.fail_op(e, Some(&sender));
                }
            }
        }
    }

    fn on_initial(
        &mut self,
        sender: UserId,
        packet: WirePacket,
        info: crate::greeter::InitialInfo,
    ) {
        let from_member = sender != self.own_id && self.current.keys.members.contains(&sender);
        if from_member && self.current.agreement.is_some() && !self.order.chain_consistent(&info) {
            self.warn(
                WarningCode::ChainHashMismatch,
                format!(
                    "operation {} from {} does not extend our history",
                    packet.id.short(),
                    sender
                ),
                vec![sender.clone()],
            );
        }
        let ours = self
            .proposal
            .as_ref()
            .is_some_and(|p| p.initial == packet.id);
        let decision = self.order.try_accept_initial(
            &self.own_id,
            packet.id,
            &packet.bytes,
            &info,
            &self.channel,
        );
        let op_name = packet.id.short();
        match decision {
            Decision::Reject(cause) => {
                self.emit(Notice::OperationRejected {
                    op: op_name,
                    initiator: info.source.clone(),
                    cause: cause.as_str().to_owned(),
                });
                if ours {
                    let p = self.proposal.take().expect("checked above");
                    p.handle.resolve(OpOutcome::Rejected {
                        cause: cause.as_str().to_owned(),
                    });
                    self.try_auto_exclude();
                }
            }
            Decision::Accept => {
                self.emit(Notice::OperationStarted {
                    op: op_name.clone(),
                    kind: info.kind.as_str().to_owned(),
                    initiator: info.source.clone(),
                    members: info.members.clone(),
                });
                if !info.members.contains(&self.own_id) {
                    // The rest of the session is moving on without us; wait
                    // to be removed from the channel. The operation stays in
                    // progress so later initials are still resolved.
                    self.excluded = true;
                    return;
                }
                let Ok(fields) = parse_greeting(&packet) else {
                    self.order.op_failed();
                    return;
                };
                let joining = !self.current.keys.members.contains(&info.source)
                    || self.current.agreement.is_none();
                let old_members = match info.kind {
                    OpKind::Establish => Vec::new(),
                    OpKind::Include => fields.members[..fields.nonces.len()].to_vec(),
                    OpKind::Exclude | OpKind::Refresh => self.current.keys.members.clone(),
                };
                let (greeting, handle) = if ours {
                    let p = self.proposal.take().expect("checked above");
                    (p.greeting, Some(p.handle))
                } else {
                    match Greeting::from_initial(
                        &self.own_id,
                        self.current.agreement.as_ref(),
                        &fields,
                    ) {
                        Ok(g) => (g, None),
                        Err(e) => {
                            self.order.op_failed();
                            self.emit(Notice::OperationFailed {
                                op: op_name,
                                reason: e.to_string(),
                            });
                            return;
                        }
                    }
                };
                self.op = Some(ActiveOp {
                    greeting,
                    started_at: self.now,
                    handle,
                    old_members,
                    joining,
                });
                self.feed_op(sender, packet, fields);
            }
        }
    }

    fn feed_op(
        &mut self,
        sender: UserId,
        packet: WirePacket,
        fields: crate::greeter::GreetingFields,
    ) {
        let Some(op) = self.op.as_mut() else { return };
        let ctx = GreetCtx {
            identity: &self.identity,
            directory: &*self.directory,
        };
        match op
            .greeting
            .recv(&sender, &packet, &fields, &ctx, &mut self.rng)
        {
            Ok(out) => {
                self.outbox.extend(out.into_iter().map(ChannelAction::Send));
                if op.greeting.status() == &GreetingStatus::Succeeded {
                    self.complete_op(&packet);
                }
            }
            Err(e) => self.fail_op(e, Some(&sender)),
        }
    }

    fn complete_op(&mut self, final_packet: &WirePacket) {
        let op = self.op.take().expect("operation running");
        self.order
            .op_succeeded(final_packet.id, &final_packet.bytes);
        let op_name = op
            .greeting
            .initial_id()
            .map(|p| p.short())
            .unwrap_or_default();
        let keys = match op.greeting.result() {
            Some(Ok(k)) => k,
            other => {
                let reason = match other {
                    Some(Err(e)) => e.to_string(),
                    _ => "no result".to_owned(),
                };
                self.emit(Notice::OperationFailed {
                    op: op_name,
                    reason,
                });
                return;
            }
        };
        let agreement = op.greeting.agreement().cloned();
        let mut next = Subsession::new(keys.clone(), agreement, self.policy, self.now);
        if op.joining {
            next.predecessors = op
                .old_members
                .iter()
                .filter(|m| **m != self.own_id)
                .cloned()
                .collect();
        }
        self.key_history.push(keys.clone());
        let old = std::mem::replace(&mut self.current, next);
        if old.is_shared() && !op.joining {
            self.begin_shutdown(old);
        } else {
            self.close(old, true, false);
        }
        let members = keys.members.clone();
        self.emit(Notice::MembershipChanged {
            subsession: short(&keys.sid),
            members: members.clone(),
        });
        self.emit(Notice::OperationSucceeded {
            op: op_name,
            kind: op.greeting.kind().as_str().to_owned(),
            members: members.clone(),
        });
        if let Some(h) = &op.handle {
            h.resolve(OpOutcome::Succeeded {
                members: members.clone(),
            });
        }
        if op.greeting.kind() == OpKind::Exclude && op.greeting.initiator() == &self.own_id {
            let gone: Vec<UserId> = op
                .old_members
                .iter()
                .filter(|m| !members.contains(m) && self.channel.contains(*m))
                .cloned()
                .collect();
            if !gone.is_empty() {
                self.outbox.push_back(ChannelAction::Kick(gone));
            }
        }
        if self.leaving.is_some() && self.current.is_shared() && self.current.own_fin.is_none() {
            let _ = self.author(None, MsgKind::Fin.control_body().to_vec());
        }
        self.retry_pending();
        self.try_auto_exclude();
    }

    fn fail_op(&mut self, e: Error, culprit: Option<&UserId>) {
        let Some(op) = self.op.take() else { return };
        self.order.op_failed();
        let op_name = op
            .greeting
            .initial_id()
            .map(|p| p.short())
            .unwrap_or_default();
        if let Some(who) = culprit {
            if matches!(
                e,
                Error::AuthFailure(_) | Error::Malformed(_) | Error::ProtocolViolation(_)
            ) {
                self.warn(
                    WarningCode::AuthFailure,
                    format!("operation {op_name}: packet from {who} failed verification: {e}"),
                    vec![who.clone()],
                );
            }
        }
        self.emit(Notice::OperationFailed {
            op: op_name,
            reason: e.to_string(),
        });
        if let Some(h) = op.handle {
            h.resolve(OpOutcome::Failed {
                reason: e.to_string(),
            });
        }
        if self.current.agreement.is_none() {
            self.retry.clear();
        }
        self.try_auto_exclude();
    }

    fn begin_shutdown(&mut self, mut old: Subsession) {
        if old.own_fin.is_none() {
            if let Ok((fin, packet)) = author_in(
                &mut old,
                &mut self.rng,
                &self.own_id,
                self.now,
                MsgKind::Fin.control_body(),
            ) {
                old.own_fin = Some((fin, self.now));
                self.outbox.push_back(ChannelAction::Send(packet));
            }
        }
        self.previous.push(old);
    }

    fn close(&mut self, sub: Subsession, clean: bool, announce: bool) {
        self.log.append_subsession(sub.keys.sid, &sub.transcript);
        if announce {
            self.emit(Notice::SubsessionClosed {
                subsession: sub.sid(),
                clean,
            });
        }
        self.archive.push_back(sub.keys);
        while self.archive.len() > ARCHIVE_LEN {
            self.archive.pop_front();
        }
    }

    fn reset_solo(&mut self) {
        if let Some(op) = self.op.take() {
            let op_name = op
                .greeting
                .initial_id()
                .map(|p| p.short())
                .unwrap_or_default();
            self.emit(Notice::OperationFailed {
                op: op_name,
                reason: "left the channel".into(),
            });
            if let Some(h) = op.handle {
                h.resolve(OpOutcome::Failed {
                    reason: "left the channel".into(),
                });
            }
        }
        if let Some(p) = self.proposal.take() {
            p.handle.resolve(OpOutcome::Rejected {
                cause: "left the channel".into(),
            });
        }
        let keys = SubsessionKeys::solo(self.own_id.clone(), &mut self.rng);
        let next = Subsession::new(keys.clone(), None, self.policy, self.now);
        let old = std::mem::replace(&mut self.current, next);
        self.close(old, true, false);
        for p in std::mem::take(&mut self.previous) {
            let clean = p.fin_settled();
            self.close(p, clean, true);
        }
        self.key_history.push(keys.clone());
        self.order.reset(&mut self.rng);
        self.excluded = false;
        self.leaving = None;
        self.leave_sent = false;
        self.auto_exclude.clear();
        self.retry.clear();
        self.channel.clear();
        self.emit(Notice::MembershipChanged {
            subsession: short(&keys.sid),
            members: vec![self.own_id.clone()],
        });
    }

    fn on_data(&mut self, sender: UserId, packet: WirePacket) {
        if self.try_decrypt(&sender, &packet) {
            return;
        }
        if self
            .archive
            .iter()
            .any(|k| verify_decrypt_relayed(&[k], &packet, &sender).is_ok())
        {
            return;
        }
        let awaiting_keys = self
            .op
            .as_ref()
            .is_some_and(|op| op.greeting.targets().contains(&sender));
        let silent_drop = self.excluded
            || self.current.predecessors.contains(&sender)
            || (self.current.agreement.is_none() && !awaiting_keys);
        if !silent_drop {
            self.retry.push(Retry {
                sender,
                packet,
                since: self.now,
            });
        }
    }

    /// Steps 3 and 4 of the pipeline. Returns whether some subsession took
    /// the packet.
    fn try_decrypt(&mut self, sender: &UserId, packet: &WirePacket) -> bool {
        let found = {
            let candidates: Vec<&SubsessionKeys> = std::iter::once(&self.current.keys)
                .chain(self.previous.iter().map(|s| &s.keys))
                .collect();
            verify_decrypt_relayed(&candidates, packet, sender)
        };
        match found {
            Ok((i, author, pt)) => {
                self.accept_data(i, &author, sender, packet, pt);
                true
            }
            Err(_) => false,
        }
    }

    fn accept_data(
        &mut self,
        idx: usize,
        author: &UserId,
        relay: &UserId,
        packet: &WirePacket,
        pt: Plaintext,
    ) {
        let Ok(kind) = MsgKind::classify(&pt.body) else {
            return;
        };
        let now = self.now;
        let own = self.own_id.clone();
        let sub = if idx == 0 {
            &mut self.current
        } else {
            &mut self.previous[idx - 1]
        };
        let id = MsgId::from(packet.id);
        let msg = Msg {
            id,
            author: author.clone(),
            readers: sub.keys.members.iter().cloned().collect(),
            parents: pt.parents.into_iter().collect(),
            body: pt.body,
            kind,
        };
        sub.packets.entry(id).or_insert_with(|| packet.clone());
        if author != &own {
            sub.monitor.on_activity(author, now);
        }
        let result = sub.transcript.add(msg, now);
        let mut resend = None;
        if result.status == AddStatus::Rejected(crate::transcript::RejectReason::Duplicate)
            && *relay != own
        {
            resend = sub
                .monitor
                .on_duplicate(&sub.transcript, &id, now)
                .and_then(|m| sub.packets.get(&m).cloned());
        }
        let sid = sub.sid();
        let mut notices = Vec::new();
        for m in &result.accepted {
            sub.monitor.on_accept(&sub.transcript, m, now);
            if m.kind == MsgKind::Content {
                notices.push(accepted_notice(&sid, m));
            }
        }
        if let Some(p) = resend {
            self.outbox.push_back(ChannelAction::Send(p));
        }
        for n in notices {
            self.emit(n);
        }
    }

    fn retry_pending(&mut self) {
        for r in std::mem::take(&mut self.retry) {
            if !self.try_decrypt(&r.sender, &r.packet) {
                self.retry.push(r);
            }
        }
    }

    /// Authors a message in the current subsession (`None`) or a previous
    /// one.
    fn author(&mut self, previous: Option<usize>, body: Vec<u8>) -> Result<MsgId> {
        let sub = match previous {
            None => &mut self.current,
            Some(i) => &mut self.previous[i],
        };
        let (id, packet) = author_in(sub, &mut self.rng, &self.own_id, self.now, &body)?;
        let kind = MsgKind::classify(&body)?;
        if kind == MsgKind::Fin {
            sub.own_fin = Some((id, self.now));
        }
        let shared = sub.is_shared();
        let notice = (kind == MsgKind::Content)
            .then(|| accepted_notice(&sub.sid(), sub.transcript.get(&id).expect("just added")));
        if shared {
            self.outbox.push_back(ChannelAction::Send(packet));
        }
        if let Some(n) = notice {
            self.emit(n);
        }
        Ok(id)
    }

    // ----- time ----------------------------------------------------------

    pub fn tick(&mut self, now: u64) {
        self.now = self.now.max(now);
        let now = self.now;

        for idx in 0..=self.previous.len() {
            let actions = {
                let sub = if idx == 0 {
                    &mut self.current
                } else {
                    &mut self.previous[idx - 1]
                };
                sub.monitor.tick(&sub.transcript, now)
            };
            for a in actions {
                self.apply_liveness(idx, a);
            }
            let stale = {
                let sub = if idx == 0 {
                    &mut self.current
                } else {
                    &mut self.previous[idx - 1]
                };
                sub.transcript
                    .stale_deferred(now, self.policy.buffer_timeout)
            };
            if !stale.is_empty() {
                self.warn(
                    WarningCode::BufferedTooLong,
                    format!("{} message(s) still waiting for parents", stale.len()),
                    Vec::new(),
                );
            }
        }

        let timeout = self.policy.buffer_timeout;
        let (stale, keep): (Vec<Retry>, Vec<Retry>) = std::mem::take(&mut self.retry)
            .into_iter()
            .partition(|r| now.saturating_sub(r.since) > timeout);
        self.retry = keep;
        for r in stale {
            self.warn(
                WarningCode::BufferedTooLong,
                format!(
                    "packet {} from {} could not be decrypted",
                    r.packet.id.short(),
                    r.sender
                ),
                vec![r.sender],
            );
        }

        if let Some(op) = &self.op {
            if now >= op.started_at + self.policy.op_timeout {
                let missing: Vec<UserId> = op.greeting.missing_acks().into_iter().collect();
                let name = op
                    .greeting
                    .initial_id()
                    .map(|p| p.short())
                    .unwrap_or_default();
                self.warn(
                    WarningCode::OperationTimeout,
                    format!("operation {name} did not finish"),
                    missing,
                );
                self.fail_op(Error::Incomplete("operation timed out"), None);
            }
        }
        if let Some(p) = &self.proposal {
            if now >= p.sent_at + self.policy.op_timeout {
                let p = self.proposal.take().expect("checked above");
                self.emit(Notice::OperationRejected {
                    op: p.initial.short(),
                    initiator: self.own_id.clone(),
                    cause: "not-delivered".into(),
                });
                p.handle.resolve(OpOutcome::Rejected {
                    cause: "not-delivered".into(),
                });
            }
        }

        let mut i = 0;
        while i < self.previous.len() {
            let p = &self.previous[i];
            let settled = p.fin_settled();
            let expired = p
                .own_fin
                .is_some_and(|(_, at)| now >= at + self.policy.shutdown_timeout);
            if settled || expired {
                let sub = self.previous.remove(i);
                if !settled {
                    let missing: Vec<UserId> = sub
                        .own_fin
                        .map(|(id, _)| sub.monitor.missing_acks(&id).into_iter().collect())
                        .unwrap_or_default();
                    self.warn(
                        WarningCode::ShutdownIncomplete,
                        format!(
                            "subsession {} closed before its FIN was acknowledged",
                            sub.sid()
                        ),
                        missing,
                    );
                }
                self.close(sub, settled, true);
            } else {
                i += 1;
            }
        }

        if let Some(since) = self.leaving {
            if !self.leave_sent {
                let settled = self.current.fin_settled() || self.excluded;
                let expired = now >= since + self.policy.shutdown_timeout;
                if expired && !settled {
                    let missing: Vec<UserId> = self
                        .current
                        .own_fin
                        .map(|(id, _)| self.current.monitor.missing_acks(&id).into_iter().collect())
                        .unwrap_or_default();
                    self.warn(
                        WarningCode::ShutdownIncomplete,
                        format!(
                            "leaving subsession {} before its FIN was acknowledged",
                            self.current.sid()
                        ),
                        missing,
                    );
                }
                if (settled || expired) && self.op.is_none() {
                    self.leave_sent = true;
                    self.outbox.push_back(ChannelAction::Leave);
                }
            }
        }

        self.try_auto_exclude();
    }

    fn apply_liveness(&mut self, idx: usize, action: Action) {
        match action {
            Action::Warn { code, msg, members } => {
                let sid = if idx == 0 {
                    self.current.sid()
                } else {
                    self.previous[idx - 1].sid()
                };
                let detail = match msg {
                    Some(m) => format!(
                        "message {} in subsession {sid} lacks acknowledgements",
                        m.short()
                    ),
                    None => format!("no activity in subsession {sid}"),
                };
                self.warn(code, detail, members);
            }
            Action::Resend(ids) => {
                let sub = if idx == 0 {
                    &self.current
                } else {
                    &self.previous[idx - 1]
                };
                let packets: Vec<WirePacket> = ids
                    .iter()
                    .filter_map(|id| sub.packets.get(id).cloned())
                    .collect();
                self.outbox
                    .extend(packets.into_iter().map(ChannelAction::Send));
            }
            Action::AutoAck => {
                let _ = self.author(if idx == 0 { None } else { Some(idx - 1) }, Vec::new());
            }
            Action::Heartbeat => {
                if idx == 0 && !self.excluded {
                    let _ = self.author(None, Vec::new());
                }
            }
        }
    }
}

fn accepted_notice(sid: &str, m: &Msg) -> Notice {
    Notice::MessageAccepted {
        subsession: sid.to_owned(),
        id: m.id.short(),
        author: m.author.clone(),
        text: m.text().unwrap_or_default().to_owned(),
        parents: m.parents.iter().map(|p| p.short()).collect(),
        readers: m.readers.iter().cloned().collect(),
    }
}

/// Encrypts `body` with the transcript frontier as parents and records it
/// locally.
fn author_in(
    sub: &mut Subsession,
    rng: &mut ChaCha20Rng,
    own: &UserId,
    now: u64,
    body: &[u8],
) -> Result<(MsgId, WirePacket)> {
    let kind = MsgKind::classify(body)?;
    let parents: Vec<MsgId> = sub.transcript.frontier().iter().copied().collect();
    let packet = encrypt_message(&sub.keys, &parents, body, rng)?;
    let id = MsgId::from(packet.id);
    let msg = Msg {
        id,
        author: own.clone(),
        readers: sub.keys.members.iter().cloned().collect(),
        parents: parents.into_iter().collect(),
        body: body.to_vec(),
        kind,
    };
    let result = sub.transcript.add(msg, now);
    if result.status != AddStatus::Accepted {
        return Err(Error::Rejected("own message not accepted by transcript"));
    }
    for m in &result.accepted {
        sub.monitor.on_accept(&sub.transcript, m, now);
    }
    sub.packets.insert(id, packet.clone());
    Ok((id, packet))
}
